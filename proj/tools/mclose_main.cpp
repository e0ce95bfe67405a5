#include <iostream>

#include "mclose/cli.hpp"

int main(int argc, char** argv) {
    return mclose::run_cli(argc, argv, std::cout, std::cerr);
}
