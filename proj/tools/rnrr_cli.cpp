#include "rnrr/cli.hpp"

int main(int argc, char** argv) { return rnrr::run_cli(argc, argv); }
