#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return vole::cli::run_command(argc, argv, std::cout, std::cerr);
}
