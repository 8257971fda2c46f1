#include "cli.hpp"

int main(int argc, char** argv) { return scm::cli::run(argc, argv); }
