#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "spildl/search.hpp"

namespace spildl {

enum ExitCode : int { kExitOk = 0, kExitInput = 1, kExitBudget = 2, kExitCluster = 3 };

struct ReportedHypothesis {
    std::string rendered;
    std::uint32_t pos_covered = 0;
    std::uint32_t neg_covered = 0;
    double accuracy = 0.0;
    double score = 0.0;
    std::uint32_t length = 0;
};

struct RunReport {
    std::vector<ReportedHypothesis> final_hypotheses;
    std::vector<IterationStats> iterations;
    std::int64_t wall_millis = 0;
    std::size_t evaluated = 0;
    SearchStatus status = SearchStatus::Exhausted;
};

RunReport make_report(const SearchResult& result, const SymbolTable& symbols, std::int64_t wall_millis);

/// Human-readable report.
void print_report(const RunReport& report, std::ostream& out);

/// JSON-lines report: one "iteration" object per iteration, one
/// "hypothesis" object per final hypothesis, then one "summary" object.
void print_report_json(const RunReport& report, std::ostream& out);

int exit_code_for(SearchStatus s);

/// Entry point of the spildl command line tool. argv[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spildl
