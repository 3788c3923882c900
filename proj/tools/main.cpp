#include "semg/cli.hpp"

int main(int argc, char** argv) { return semg::cli_main(argc, argv); }
