#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mpe/bench.hpp"

namespace mpe {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const char* const kTrialHeader =
    "dataset,side,fraction,size,repeat,trial,estimator,variant,kappa_star,kappa_hat,abs_error,seed,status";

// Shortest representation that parses back to the same double.
std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw std::runtime_error("number formatting failed");
    return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
    if (s == "nan") return kNaN;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("bad number in trials csv: " + s);
    return v;
}

template <class T>
T parse_unsigned(const std::string& s) {
    T v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("bad integer in trials csv: " + s);
    return v;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

json num_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json aggregate_to_json(const CellAggregate& a) {
    return {{"n", a.n},
            {"failed", a.failed},
            {"mean_abs_error", num_json(a.mean_abs_error)},
            {"variance_abs_error", num_json(a.variance_abs_error)},
            {"mean_kappa_hat", num_json(a.mean_kappa_hat)}};
}

void write_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << body;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void prepare_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw std::runtime_error("output directory is not writable: " + dir.string());
    }
}

}  // namespace

std::string TrialRow::cell() const { return to_string(side) + "/" + num(fraction) + "/" + std::to_string(size); }

void summarize(ExperimentReport& report) {
    report.aggregates.clear();
    report.comparisons.clear();
    report.failed_rows = static_cast<std::size_t>(
        std::count_if(report.rows.begin(), report.rows.end(), [](const TrialRow& r) { return !r.ok(); }));

    std::vector<std::string> estimators;
    std::vector<std::string> cells;
    for (const auto& r : report.rows) {
        if (std::find(estimators.begin(), estimators.end(), r.estimator) == estimators.end()) {
            estimators.push_back(r.estimator);
        }
        const std::string c = r.cell();
        if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
    }
    cells.push_back("all");

    for (const auto& e : estimators) {
        for (const auto& c : cells) {
            auto in_cell = [&](const TrialRow& r) { return r.estimator == e && (c == "all" || r.cell() == c); };
            for (Variant v : {Variant::plain, Variant::regrouped}) {
                CellAggregate a;
                a.estimator = e;
                a.variant = v;
                a.cell = c;
                double sum = 0.0;
                double sum_k = 0.0;
                std::vector<double> errs;
                for (const auto& r : report.rows) {
                    if (!in_cell(r) || r.variant != v) continue;
                    if (!r.ok()) {
                        ++a.failed;
                        continue;
                    }
                    errs.push_back(r.abs_error);
                    sum += r.abs_error;
                    sum_k += r.kappa_hat;
                }
                a.n = errs.size();
                a.mean_abs_error = a.n ? sum / static_cast<double>(a.n) : kNaN;
                a.mean_kappa_hat = a.n ? sum_k / static_cast<double>(a.n) : kNaN;
                if (a.n >= 2) {
                    double ss = 0.0;
                    for (double x : errs) ss += (x - a.mean_abs_error) * (x - a.mean_abs_error);
                    a.variance_abs_error = ss / static_cast<double>(a.n - 1);
                } else {
                    a.variance_abs_error = kNaN;
                }
                report.aggregates.push_back(a);
            }

            // Pair on trial index: both variants of a trial share split and seeds.
            std::map<std::size_t, std::pair<const TrialRow*, const TrialRow*>> by_trial;
            for (const auto& r : report.rows) {
                if (!in_cell(r)) continue;
                auto& slot = by_trial[r.trial];
                (r.variant == Variant::plain ? slot.first : slot.second) = &r;
            }
            PairedComparison pc;
            pc.estimator = e;
            pc.cell = c;
            std::vector<double> plain;
            std::vector<double> regrouped;
            for (const auto& [trial, pr] : by_trial) {
                if (pr.first && pr.second && pr.first->ok() && pr.second->ok()) {
                    plain.push_back(pr.first->abs_error);
                    regrouped.push_back(pr.second->abs_error);
                }
            }
            pc.n_pairs = plain.size();
            if (pc.n_pairs >= 5) pc.test = wilcoxon_signed_rank(plain, regrouped);
            report.comparisons.push_back(pc);
        }
    }
}

std::string trials_csv(const ExperimentReport& report) {
    std::ostringstream os;
    os << kTrialHeader << '\n';
    for (const auto& r : report.rows) {
        os << csv_field(r.dataset) << ',' << to_string(r.side) << ',' << num(r.fraction) << ',' << r.size << ','
           << r.repeat << ',' << r.trial << ',' << csv_field(r.estimator) << ',' << to_string(r.variant) << ','
           << num(r.kappa_star) << ',' << num(r.kappa_hat) << ',' << num(r.abs_error) << ',' << r.seed << ','
           << csv_field(r.ok() ? "ok" : "failed: " + r.error) << '\n';
    }
    return os.str();
}

std::vector<TrialRow> parse_trials_csv(std::istream& in) {
    const auto records = parse_csv(in);
    if (records.empty()) throw std::invalid_argument("trials csv is empty");
    std::string header;
    for (std::size_t i = 0; i < records[0].size(); ++i) header += (i ? "," : "") + records[0][i];
    if (header != kTrialHeader) throw std::invalid_argument("unexpected trials csv header");
    std::vector<TrialRow> rows;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& f = records[i];
        if (f.size() == 1 && f[0].empty()) continue;
        if (f.size() != 13) throw std::invalid_argument("trials csv row " + std::to_string(i) + " has wrong width");
        TrialRow r;
        r.dataset = f[0];
        if (f[1] != "positive" && f[1] != "negative") throw std::invalid_argument("bad side in trials csv: " + f[1]);
        r.side = f[1] == "positive" ? ComponentSide::positive : ComponentSide::negative;
        r.fraction = parse_double(f[2]);
        r.size = parse_unsigned<std::size_t>(f[3]);
        r.repeat = parse_unsigned<std::size_t>(f[4]);
        r.trial = parse_unsigned<std::size_t>(f[5]);
        r.estimator = f[6];
        if (f[7] != "plain" && f[7] != "regrouped") throw std::invalid_argument("bad variant in trials csv: " + f[7]);
        r.variant = f[7] == "plain" ? Variant::plain : Variant::regrouped;
        r.kappa_star = parse_double(f[8]);
        r.kappa_hat = parse_double(f[9]);
        r.abs_error = parse_double(f[10]);
        r.seed = parse_unsigned<std::uint64_t>(f[11]);
        if (f[12] != "ok") {
            const std::string prefix = "failed: ";
            r.error = f[12].rfind(prefix, 0) == 0 ? f[12].substr(prefix.size()) : f[12];
            if (r.error.empty()) r.error = "failed";
        }
        rows.push_back(r);
    }
    return rows;
}

json aggregate_json(const ExperimentReport& report) {
    json cells = json::array();
    for (const auto& pc : report.comparisons) {
        json entry = {{"estimator", pc.estimator}, {"cell", pc.cell}, {"n_pairs", pc.n_pairs}};
        for (const auto& a : report.aggregates) {
            if (a.estimator == pc.estimator && a.cell == pc.cell) entry[to_string(a.variant)] = aggregate_to_json(a);
        }
        if (pc.test) {
            entry["wilcoxon"] = {{"alternative", "regrouped error < plain error"},
                                 {"statistic", pc.test->statistic},
                                 {"p_value", pc.test->p_value},
                                 {"n_used", pc.test->n_used},
                                 {"zeros_dropped", pc.test->zeros_dropped},
                                 {"exact", pc.test->exact},
                                 {"all_zero", pc.test->all_zero}};
        } else {
            entry["wilcoxon"] = nullptr;
        }
        cells.push_back(entry);
    }
    return {{"dataset", report.dataset},
            {"rows", report.rows.size()},
            {"failed_rows", report.failed_rows},
            {"variance_denominator", "n-1"},
            {"cells", cells}};
}

std::vector<std::filesystem::path> emit_report(const ExperimentReport& report, const std::filesystem::path& dir,
                                               const ReportFormats& formats) {
    prepare_dir(dir);
    std::vector<std::filesystem::path> written;
    if (formats.csv) {
        write_file(dir / "trials.csv", trials_csv(report));
        written.push_back(dir / "trials.csv");
    }
    if (formats.json) {
        write_file(dir / "aggregate.json", aggregate_json(report).dump(2) + "\n");
        written.push_back(dir / "aggregate.json");
    }
    if (formats.timings) {
        std::ostringstream os;
        os << "trial,estimator,variant,wallclock_s\n";
        for (const auto& r : report.rows) {
            os << r.trial << ',' << csv_field(r.estimator) << ',' << to_string(r.variant) << ','
               << num(r.wallclock_s) << '\n';
        }
        write_file(dir / "timings.csv", os.str());
        written.push_back(dir / "timings.csv");
    }
    return written;
}

std::vector<std::filesystem::path> emit_sweep(const SweepReport& report, const std::filesystem::path& dir) {
    prepare_dir(dir);
    std::ostringstream curve;
    curve << "estimator,p,n,failed,mean_kappa_diff,mean_error_diff\n";
    for (const auto& p : report.points) {
        curve << csv_field(p.estimator) << ',' << num(p.p) << ',' << p.n << ',' << p.failed << ','
              << num(p.mean_kappa_diff) << ',' << num(p.mean_error_diff) << '\n';
    }
    std::ostringstream trials;
    trials << "trial,estimator,p,copied,kappa_star,kappa_hat,kappa_hat_prime,status\n";
    for (const auto& t : report.trials) {
        trials << t.trial << ',' << csv_field(t.estimator) << ',' << num(t.p) << ',' << t.copied << ','
               << num(t.kappa_star) << ',' << num(t.kappa_hat) << ',' << num(t.kappa_hat_prime) << ','
               << csv_field(t.error.empty() ? "ok" : "failed: " + t.error) << '\n';
    }
    write_file(dir / "sweep.csv", curve.str());
    write_file(dir / "sweep_trials.csv", trials.str());
    return {dir / "sweep.csv", dir / "sweep_trials.csv"};
}

}  // namespace mpe
