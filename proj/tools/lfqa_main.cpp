#include <iostream>

#include "lfqa/cli.hpp"

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return lfqa::dispatch(args, std::cout, std::cerr);
}
