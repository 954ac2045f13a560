#include <iostream>
#include <string>
#include <vector>

#include "sae/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return sae::cli_dispatch(args, std::cout, std::cerr);
}
