#include <iostream>

#include "amc/runtime.hpp"
#include "cli.hpp"

int main(int argc, char** argv) {
    amc::tune_allocator();
    return amc::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
