#include <iostream>
#include <string>
#include <vector>

#include "spildl/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return spildl::run_cli(args, std::cout, std::cerr);
}
