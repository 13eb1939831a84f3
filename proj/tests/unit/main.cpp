#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <iostream>

#include "helpers.hpp"
#include "orchestra/net.hpp"

// The whole suite runs with outbound traffic limited to loopback. Local test
// servers still work; anything aimed elsewhere is refused and counted.
int main(int argc, char** argv) {
  using namespace orchestra;
  net::set_policy(net::Policy::LoopbackOnly);
  net::reset_counters();

  doctest::Context context(argc, argv);
  const int status = context.run();
  if (context.shouldExit()) return status;

  const std::size_t stray = net::refused_requests() - testing::intentional_refusals;
  std::cout << "network guard: " << net::attempted_requests() << " requests attempted, " << stray
            << " unexpected non-loopback attempts\n";
  if (stray != 0) return 1;
  return status;
}
