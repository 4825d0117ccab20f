#include "semdec/cli/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return semdec::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
