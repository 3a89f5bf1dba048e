#include "spnas/cli.hpp"

int main(int argc, char** argv) { return spnas::dispatch(argc, argv); }
