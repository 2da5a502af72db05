#include "spildl/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <csignal>
#include <iostream>
#include <thread>

#include "spildl/cluster.hpp"

namespace spildl {

namespace {

using Clock = std::chrono::steady_clock;
using json = nlohmann::json;

std::atomic<bool> g_stop_requested{false};

extern "C" void on_stop_signal(int) { g_stop_requested = true; }

std::int64_t millis_since(Clock::time_point start) {
    return std::chrono::duration_cast<Millis>(Clock::now() - start).count();
}

struct LearnOptions {
    std::string kb_path;
    std::string examples_path;
    std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
    std::size_t beam = 0;
    std::size_t limit = 1;
    double noise = 0.0;
    std::uint32_t max_length = 10;
    std::optional<std::int64_t> max_millis;
    double target_accuracy = 1.0;
    bool no_disjunction = false;
    bool no_cardinality = false;
    bool no_inverse = false;
    bool no_negation = false;
    bool json = false;
    std::uint64_t seed = 0;
};

void add_learn_options(CLI::App& cmd, LearnOptions& o) {
    cmd.add_option("kb", o.kb_path, "Knowledge base file")->required();
    cmd.add_option("examples", o.examples_path, "Examples file")->required();
    cmd.add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd.add_option("--beam", o.beam, "Beam width (default: thread count)")->check(CLI::PositiveNumber);
    cmd.add_option("--limit", o.limit, "Number of final hypotheses")->check(CLI::PositiveNumber);
    cmd.add_option("--noise", o.noise, "Fraction of positives a solution may miss")->check(CLI::Range(0.0, 0.999999));
    cmd.add_option("--max-length", o.max_length, "Maximum concept length")->check(CLI::Range(1u, 65535u));
    cmd.add_option("--max-millis", o.max_millis, "Time budget in milliseconds")->check(CLI::NonNegativeNumber);
    cmd.add_option("--target-accuracy", o.target_accuracy, "Stop once a hypothesis reaches this accuracy")
        ->check(CLI::Range(0.0, 1.0));
    cmd.add_flag("--no-disjunction", o.no_disjunction, "Do not generate unions");
    cmd.add_flag("--no-cardinality", o.no_cardinality, "Do not generate cardinality restrictions");
    cmd.add_flag("--no-inverse", o.no_inverse, "Do not use inverse roles");
    cmd.add_flag("--no-negation", o.no_negation, "Do not generate negated classes");
    cmd.add_flag("--json", o.json, "Emit a JSON-lines report");
    cmd.add_option("--seed", o.seed, "Accepted for compatibility; the search is deterministic");
}

SearchConfig search_config(const LearnOptions& o) {
    SearchConfig cfg;
    cfg.threads = o.threads;
    cfg.beam_width = o.beam ? o.beam : o.threads;
    cfg.limit = o.limit;
    cfg.noise = o.noise;
    cfg.max_length = o.max_length;
    cfg.max_execution_millis = o.max_millis;
    cfg.target_accuracy = o.target_accuracy;
    return cfg;
}

RefinementConfig refinement_config(const LearnOptions& o) {
    RefinementConfig r;
    r.use_disjunction = !o.no_disjunction;
    r.use_cardinality = !o.no_cardinality;
    r.use_inverse_roles = !o.no_inverse;
    r.use_negation = !o.no_negation;
    r.max_length = o.max_length;
    return r;
}

struct Loaded {
    ParsedKb parsed;
    ExampleSet examples;
};

Loaded load_inputs(const std::string& kb_path, const std::string& examples_path) {
    Loaded l;
    l.parsed = load_kb_file(kb_path);
    l.parsed.kb = materialize(std::move(l.parsed.kb), &l.parsed.symbols);
    l.examples = load_examples_file(examples_path, l.parsed.symbols, l.parsed.kb.num_individuals);
    return l;
}

void emit(const RunReport& report, bool as_json, std::ostream& out) {
    if (as_json)
        print_report_json(report, out);
    else
        print_report(report, out);
}

int cmd_learn(const LearnOptions& o, std::ostream& out) {
    const auto start = Clock::now();
    auto in = load_inputs(o.kb_path, o.examples_path);
    const auto stats = compute_statistics(in.parsed.kb);
    const auto mb = build_mb(in.parsed.kb, stats);
    const Refiner refiner(in.parsed.kb, stats, mb, refinement_config(o));
    const auto result = run_search(in.parsed.kb, in.examples, refiner, search_config(o));
    const auto report = make_report(result, in.parsed.symbols, millis_since(start));
    emit(report, o.json, out);
    return exit_code_for(report.status);
}

int cmd_eval(const std::string& kb_path, const std::string& examples_path, const std::string& text, bool as_json,
             std::ostream& out, std::ostream& err) {
    auto in = load_inputs(kb_path, examples_path);
    Concept c = Concept::top();
    try {
        c = canonicalize(parse_concept(text, in.parsed.symbols));
    } catch (const ConceptParseError& e) {
        err << "error: " << e.what() << '\n' << "  " << text << '\n' << "  " << std::string(e.column(), ' ') << "^\n";
        return kExitInput;
    }
    const auto cov = evaluate(c, in.parsed.kb, in.examples);
    const auto acc = accuracy(cov, in.examples.num_positive(), in.examples.num_negative());
    const auto rendered = render(c, in.parsed.symbols);
    if (as_json) {
        out << json{{"concept", rendered},
                    {"pos_covered", cov.pos_covered},
                    {"neg_covered", cov.neg_covered},
                    {"accuracy", acc},
                    {"length", concept_length(c)}}
                   .dump()
            << '\n';
    } else {
        out << rendered << '\n' << "pos=" << cov.pos_covered << " neg=" << cov.neg_covered << " acc=" << acc << '\n';
    }
    return kExitOk;
}

std::size_t total(const auto& per_role) {
    std::size_t n = 0;
    for (const auto& v : per_role) n += v.size();
    return n;
}

int cmd_stats(const std::string& kb_path, const std::string& examples_path, bool as_json, std::ostream& out) {
    const auto parsed = load_kb_file(kb_path);
    const auto& kb = parsed.kb;
    const auto& st = parsed.symbols;
    std::size_t class_assertions = 0;
    for (const auto& m : kb.class_members) class_assertions += m.count();
    std::vector<std::pair<std::string, std::size_t>> rows{
        {"classes", st.classes.size()},
        {"roles", st.roles.size()},
        {"numeric roles", st.numeric_roles.size()},
        {"boolean roles", st.boolean_roles.size()},
        {"string roles", st.string_roles.size()},
        {"individuals", st.individuals.size()},
        {"subclass axioms", kb.subclass_edges.size()},
        {"subrole axioms", kb.subrole_edges.size()},
        {"class assertions", class_assertions},
        {"role assertions", total(kb.role_assertions)},
        {"numeric assertions", total(kb.numeric_assertions)},
        {"boolean assertions", total(kb.boolean_assertions)},
        {"string assertions", total(kb.string_assertions)},
    };
    if (!examples_path.empty()) {
        const auto ex = load_examples_file(examples_path, st, kb.num_individuals);
        rows.emplace_back("positive examples", ex.num_positive());
        rows.emplace_back("negative examples", ex.num_negative());
    }
    if (as_json) {
        json j = json::object();
        for (const auto& [k, v] : rows) {
            auto key = k;
            std::replace(key.begin(), key.end(), ' ', '_');
            j[key] = v;
        }
        out << j.dump() << '\n';
    } else {
        for (const auto& [k, v] : rows) out << k << ": " << v << '\n';
    }
    return kExitOk;
}

struct ClusterFlags {
    std::uint16_t broadcast_port = kDefaultBroadcastPort;
    std::string broadcast_address = "255.255.255.255";
    std::uint16_t port = kDefaultDataPort;
    std::int64_t discovery_millis = 2000;
    std::size_t expect_workers = 0;
    bool with_local_worker = false;
    bool no_broadcast = false;
    std::vector<std::string> workers;
    std::uint32_t cores = 0;
    bool single_session = false;
    bool verbose = false;
};

Endpoint parse_endpoint(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--worker", "expected host:port, got '" + s + "'");
    int port = 0;
    try {
        port = std::stoi(s.substr(colon + 1));
    } catch (const std::exception&) {
        port = -1;
    }
    if (port <= 0 || port > 65535) throw CLI::ValidationError("--worker", "bad port in '" + s + "'");
    return {s.substr(0, colon), static_cast<std::uint16_t>(port)};
}

int cmd_master(const LearnOptions& o, const ClusterFlags& f, std::ostream& out, std::ostream& err) {
    const auto start = Clock::now();
    auto in = load_inputs(o.kb_path, o.examples_path);

    MasterOptions mo;
    mo.broadcast_port = f.broadcast_port;
    mo.broadcast_address = f.broadcast_address;
    mo.broadcast = !f.no_broadcast;
    mo.discovery_timeout = Millis{f.discovery_millis};
    mo.expect_workers = f.expect_workers;
    mo.log = f.verbose ? &err : nullptr;
    for (const auto& w : f.workers) mo.direct_workers.push_back(parse_endpoint(w));

    std::unique_ptr<Worker> local;
    std::jthread local_thread;
    if (f.with_local_worker) {
        WorkerOptions wo;
        wo.port = 0;
        wo.discovery = false;
        wo.single_session = true;
        wo.cores = f.cores;
        wo.log = mo.log;
        local = std::make_unique<Worker>(wo);
        mo.direct_workers.push_back({"127.0.0.1", local->tcp_port()});
        local_thread = std::jthread([&local](std::stop_token st) { local->serve(st); });
    }

    ClusterResult result;
    try {
        result = run_master(in.parsed, in.examples, search_config(o), refinement_config(o), mo);
    } catch (const ClusterError& e) {
        err << "error: " << e.what() << '\n';
        return kExitCluster;
    } catch (const NetError& e) {
        err << "error: " << e.what() << '\n';
        return kExitCluster;
    }
    if (f.verbose)
        for (const auto& w : result.workers)
            err << "worker " << w.address.str() << " cores=" << w.cores << " wn=" << w.wn
                << " probe_millis=" << w.probe_millis << (w.alive ? "" : " (lost)") << '\n';
    const auto report = make_report(result.search, in.parsed.symbols, millis_since(start));
    emit(report, o.json, out);
    return exit_code_for(report.status);
}

int cmd_worker(const ClusterFlags& f, std::ostream& err) {
    WorkerOptions wo;
    wo.broadcast_port = f.broadcast_port;
    wo.port = f.port;
    wo.cores = f.cores;
    wo.single_session = f.single_session;
    wo.log = f.verbose ? &err : nullptr;
    Worker worker(wo);
    err << "worker listening on tcp port " << worker.tcp_port() << ", discovery port " << f.broadcast_port << " ("
        << worker.cores() << " cores)\n"
        << std::flush;

    g_stop_requested = false;
    auto prev_int = std::signal(SIGINT, on_stop_signal);
    auto prev_term = std::signal(SIGTERM, on_stop_signal);
    std::jthread serving([&worker](std::stop_token st) { worker.serve(st); });
    while (!g_stop_requested) {
        if (f.single_session && worker.sessions_served() > 0) break;
        std::this_thread::sleep_for(Millis{100});
    }
    serving.request_stop();
    serving.join();
    std::signal(SIGINT, prev_int);
    std::signal(SIGTERM, prev_term);
    return kExitOk;
}

}  // namespace

RunReport make_report(const SearchResult& result, const SymbolTable& symbols, std::int64_t wall_millis) {
    RunReport r;
    r.status = result.status;
    r.iterations = result.iterations;
    r.wall_millis = wall_millis;
    r.evaluated = result.evaluated;
    for (const auto& n : result.best)
        r.final_hypotheses.push_back({render(n.expr, symbols), n.coverage.pos_covered, n.coverage.neg_covered,
                                      n.score.accuracy, n.score.value, concept_length(n.expr)});
    return r;
}

void print_report(const RunReport& report, std::ostream& out) {
    out << "status: " << to_string(report.status) << '\n'
        << "iterations: " << report.iterations.size() << '\n'
        << "evaluated: " << report.evaluated << '\n'
        << "wall millis: " << report.wall_millis << '\n';
    for (std::size_t i = 0; i < report.iterations.size(); ++i) {
        const auto& it = report.iterations[i];
        out << "iteration " << i + 1 << ": expanded=" << it.expanded << " generated=" << it.generated
            << " redundant=" << it.redundant_dropped << " weak=" << it.weak_dropped << " open=" << it.open_list_size
            << " millis=" << it.elapsed_millis << '\n';
    }
    out << "hypotheses:\n";
    for (std::size_t i = 0; i < report.final_hypotheses.size(); ++i) {
        const auto& h = report.final_hypotheses[i];
        out << i + 1 << ". " << h.rendered << " pos=" << h.pos_covered << " neg=" << h.neg_covered
            << " acc=" << h.accuracy << " length=" << h.length << " score=" << h.score << '\n';
    }
}

void print_report_json(const RunReport& report, std::ostream& out) {
    for (std::size_t i = 0; i < report.iterations.size(); ++i) {
        const auto& it = report.iterations[i];
        out << json{{"type", "iteration"},
                    {"iteration", i + 1},
                    {"expanded", it.expanded},
                    {"generated", it.generated},
                    {"redundant_dropped", it.redundant_dropped},
                    {"weak_dropped", it.weak_dropped},
                    {"open_list_size", it.open_list_size},
                    {"elapsed_millis", it.elapsed_millis}}
                   .dump()
            << '\n';
    }
    for (std::size_t i = 0; i < report.final_hypotheses.size(); ++i) {
        const auto& h = report.final_hypotheses[i];
        out << json{{"type", "hypothesis"},
                    {"rank", i + 1},
                    {"concept", h.rendered},
                    {"pos_covered", h.pos_covered},
                    {"neg_covered", h.neg_covered},
                    {"accuracy", h.accuracy},
                    {"score", h.score},
                    {"length", h.length}}
                   .dump()
            << '\n';
    }
    out << json{{"type", "summary"},
                {"status", std::string(to_string(report.status))},
                {"iterations", report.iterations.size()},
                {"evaluated", report.evaluated},
                {"wall_millis", report.wall_millis},
                {"hypotheses", report.final_hypotheses.size()}}
               .dump()
        << '\n';
}

int exit_code_for(SearchStatus s) { return s == SearchStatus::Budget ? kExitBudget : kExitOk; }

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Parallel description logic concept learner", "spildl"};
    app.require_subcommand(1);

    LearnOptions learn;
    auto* learn_cmd = app.add_subcommand("learn", "Learn a concept separating positive from negative examples");
    add_learn_options(*learn_cmd, learn);

    std::string eval_kb, eval_ex, eval_text;
    bool eval_json = false;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate one concept against the examples");
    eval_cmd->add_option("kb", eval_kb, "Knowledge base file")->required();
    eval_cmd->add_option("examples", eval_ex, "Examples file")->required();
    eval_cmd->add_option("concept", eval_text, "Concept text")->required();
    eval_cmd->add_flag("--json", eval_json, "Emit JSON");

    std::string stats_kb, stats_ex;
    bool stats_json = false;
    auto* stats_cmd = app.add_subcommand("stats", "Print dataset statistics");
    stats_cmd->add_option("kb", stats_kb, "Knowledge base file")->required();
    stats_cmd->add_option("examples", stats_ex, "Optional examples file");
    stats_cmd->add_flag("--json", stats_json, "Emit JSON");

    LearnOptions master;
    ClusterFlags master_flags;
    auto* master_cmd = app.add_subcommand("master", "Learn on a cluster of workers");
    add_learn_options(*master_cmd, master);
    master_cmd->add_option("--broadcast-port", master_flags.broadcast_port, "UDP discovery port");
    master_cmd->add_option("--broadcast-address", master_flags.broadcast_address, "UDP discovery address");
    master_cmd->add_option("--discovery-millis", master_flags.discovery_millis, "Discovery window")
        ->check(CLI::NonNegativeNumber);
    master_cmd->add_option("--expect-workers", master_flags.expect_workers, "Required number of workers");
    master_cmd->add_option("--worker", master_flags.workers, "Worker host:port to contact directly");
    master_cmd->add_flag("--with-local-worker", master_flags.with_local_worker, "Also run a worker in this process");
    master_cmd->add_flag("--no-broadcast", master_flags.no_broadcast, "Skip UDP discovery");
    master_cmd->add_option("--cores", master_flags.cores, "Cores of the local worker (default: all)");
    master_cmd->add_flag("--verbose", master_flags.verbose, "Log cluster activity to stderr");

    ClusterFlags worker_flags;
    auto* worker_cmd = app.add_subcommand("worker", "Serve expansion tasks for a master");
    worker_cmd->add_option("--broadcast-port", worker_flags.broadcast_port, "UDP discovery port");
    worker_cmd->add_option("--port", worker_flags.port, "TCP listen port (0 picks a free port)");
    worker_cmd->add_option("--cores", worker_flags.cores, "Cores to report and use (default: all)");
    worker_cmd->add_flag("--single-session", worker_flags.single_session, "Exit after one master session");
    worker_cmd->add_flag("--verbose", worker_flags.verbose, "Log protocol activity to stderr");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*learn_cmd) return cmd_learn(learn, out);
        if (*eval_cmd) return cmd_eval(eval_kb, eval_ex, eval_text, eval_json, out, err);
        if (*stats_cmd) return cmd_stats(stats_kb, stats_ex, stats_json, out);
        if (*master_cmd) return cmd_master(master, master_flags, out, err);
        if (*worker_cmd) return cmd_worker(worker_flags, err);
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const KbError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const NetError& e) {
        err << "error: " << e.what() << '\n';
        return kExitCluster;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitInput;
}

}  // namespace spildl
