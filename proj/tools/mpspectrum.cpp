#include "mpspectrum/cli.hpp"

int main(int argc, char** argv) { return mpspectrum::cli::run(argc, argv); }
