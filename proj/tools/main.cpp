#include "filippov_cli.hpp"

int main(int argc, char** argv) { return filippov::cli::main(argc, argv); }
