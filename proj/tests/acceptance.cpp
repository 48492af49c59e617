#include <algorithm>
#include <cstdio>
#include <thread>

#include "CLI11.hpp"
#include "kdamp/criteria.hpp"

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int threads = static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 6u));
  bool brief = false;
  app.add_option("--threads", threads, "concurrent simulator runs")->check(CLI::PositiveNumber);
  app.add_flag("--brief", brief, "skip the refinement and extended-range diagnostics");
  CLI11_PARSE(app, argc, argv);

  kdamp::CriteriaOptions opt;
  opt.context = !brief;
  int failed = 0;
  kdamp::run_all_criteria(opt, threads, [&](const kdamp::CriterionResult& c) {
    std::printf("%s\n", c.line().c_str());
    for (const auto& l : c.context) std::printf("      %s\n", l.c_str());
    std::fflush(stdout);
    failed += !c.pass;
  });
  std::printf("%d of 8 criteria failed\n", failed);
  return failed ? 1 : 0;
}
