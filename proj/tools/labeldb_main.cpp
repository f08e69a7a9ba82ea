#include "labeldb/cli.hpp"

#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return labeldb::cli::main(labeldb::cli::default_registry(), args, std::cout, std::cerr);
}
