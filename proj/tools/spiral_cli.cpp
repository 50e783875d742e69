#include "spiral/cli.hpp"

int main(int argc, char** argv) { return spiral::cli::run(argc, argv); }
