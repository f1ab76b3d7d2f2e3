#include "odp/cli.hpp"

int main(int argc, char** argv) { return odp::cli_main(argc, argv); }
