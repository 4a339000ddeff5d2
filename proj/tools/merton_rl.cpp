#include <iostream>

#include "merton/cli.hpp"

int main(int argc, char** argv) {
    return merton::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
