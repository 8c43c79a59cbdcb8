#include "kdiag/cli.hpp"

int main(int argc, char** argv) { return kdiag::cli::run(argc, argv); }
