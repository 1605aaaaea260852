#include "mvb/cli.hpp"

int main(int argc, char** argv) { return mvb::cli::run(argc, argv); }
