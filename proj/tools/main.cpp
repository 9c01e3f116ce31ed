#include <iostream>
#include <string>
#include <vector>

#include "kdiqa/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return kdiqa::cli_main(args, std::cout, std::cerr);
}
