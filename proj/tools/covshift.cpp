#include <iostream>
#include <string>
#include <vector>

#include "covshift/cli.hpp"

int main(int argc, char** argv) {
  return covshift::dispatch(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
