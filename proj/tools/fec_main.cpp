#include "fec/cli.hpp"

int main(int argc, char** argv) {
    return fec::cli::main_entry(argc, argv);
}
