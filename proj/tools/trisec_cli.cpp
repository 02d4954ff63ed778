//
// SPDX-License-Identifier: Apache-2.0
//

#include <iostream>

#include "trisec/cli.hpp"

int main(int argc, char **argv) {
  return trisec::run_cli(argc, argv, std::cout, std::cerr);
}
