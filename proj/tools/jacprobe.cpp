#include "jacprobe/cli.hpp"

int main(int argc, char** argv) { return jacprobe::cli::run(argc, argv); }
