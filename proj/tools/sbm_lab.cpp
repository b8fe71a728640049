#include "sbm/cli.hpp"

int main(int argc, char** argv) { return sbm::cli::dispatch(argc, argv); }
