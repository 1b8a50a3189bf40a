#include <iostream>

#include "promptnorm/cli.hpp"

int main(int argc, char** argv) {
    return promptnorm::cli_main(argc, argv, std::cout, std::cerr);
}
