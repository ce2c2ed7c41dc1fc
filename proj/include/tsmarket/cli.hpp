// Command-line front end. Parsing lives in main_entry; each command is a
// library function so the test suites can drive them directly.
#pragma once

#include <iosfwd>
#include <string>

namespace tsmarket::cli {

struct Options {
  std::string command;
  std::string input;
  std::string out;             // report destination; empty writes to stdout
  std::string format = "text"; // text | json
  double tol = -1.0;           // negative: per-command default
  unsigned long seed = 0;      // echoed into reports for reproducibility
  int scenario = 0;            // mechanism: realized scenario index
  std::string bids_path;       // clear-ded / nash-check
  std::string alloc_path;      // verify-sceq
  std::string prices_path;     // verify-sceq
  int grid = 50;               // nash-check / dr-counterexample probes
  std::string probes_csv;      // optional per-probe log
  std::string dump_qp;         // solve: dump the assembled program
};

// exit codes: 0 solved/pass, 1 solver failure, 2 invalid input,
// 3 equilibrium falsified or mechanism mismatch
int run(const Options& opt, std::ostream& os, std::ostream& es);

int main_entry(int argc, char** argv);

}  // namespace tsmarket::cli
