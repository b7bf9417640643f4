#include "tssl/cli.hpp"

int main(int argc, char** argv) { return tssl::cli::run(argc, argv); }
