#include "geosr/cli.hpp"

int main(int argc, char** argv) {
    return geosr::run_cli(argc, argv);
}
