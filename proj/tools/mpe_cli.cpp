// mpe: command-line front end for the oracle, the data generators and the
// experiment harness. Exit codes: 0 success, 1 some trials failed,
// 2 usage or input error.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mpe/bench.hpp"
#include "mpe/datagen.hpp"
#include "mpe/measure.hpp"

namespace {

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return nlohmann::json::parse(in);
}

int cmd_run(const std::string& manifest_path, const std::string& out_override) {
    const mpe::RunManifest m = mpe::load_manifest(manifest_path);
    const auto report = mpe::run_grid(m, {mpe::workers_from_env()});
    const auto dir = out_override.empty() ? m.output_dir : std::filesystem::path(out_override);
    for (const auto& p : mpe::emit_report(report, dir)) std::cout << "wrote " << p.string() << '\n';
    for (const auto& c : report.comparisons) {
        if (c.cell != "all") continue;
        std::printf("%-6s pairs=%zu p=%s\n", c.estimator.c_str(), c.n_pairs,
                    c.test ? std::to_string(c.test->p_value).c_str() : "n/a");
    }
    std::cout << "failed rows: " << report.failed_rows << '\n';
    return report.failed_rows == 0 ? 0 : 1;
}

int cmd_sweep(const std::string& manifest_path, const std::string& grid_text, const std::string& out_override) {
    const mpe::RunManifest m = mpe::load_manifest(manifest_path);
    std::vector<double> grid = grid_text.empty() ? m.p_grid : mpe::parse_p_grid(grid_text);
    if (grid.empty()) throw std::invalid_argument("no p grid given on the command line or in the manifest");
    const auto report = mpe::sweep_copy_fraction(m, grid, {mpe::workers_from_env()});
    const auto dir = out_override.empty() ? m.output_dir : std::filesystem::path(out_override);
    for (const auto& p : mpe::emit_sweep(report, dir)) std::cout << "wrote " << p.string() << '\n';
    for (const auto& pt : report.points) {
        std::printf("%-6s p=%.4f n=%zu kappa_diff=%+.4f error_diff=%+.4f\n", pt.estimator.c_str(), pt.p, pt.n,
                    pt.mean_kappa_diff, pt.mean_error_diff);
    }
    return report.failed == 0 ? 0 : 1;
}

int cmd_oracle(const std::string& f_path, const std::string& h_path) {
    const auto f = mpe::distribution_from_json(read_json(f_path));
    const auto h = mpe::distribution_from_json(read_json(h_path));
    const auto k = mpe::kappa_max_detail(f, h);
    nlohmann::json out = {{"kappa", k.value}, {"argmin", k.argmin}};
    if (k.value > 0.0 && k.value < 1.0) {
        // (F - kappa H) / (1 - kappa): the latent component left after removing H
        out["residual"] = mpe::to_json(mpe::non_identifiable_witness(f, h, k.value, 0.0));
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_datagen(const std::string& spec_path, const std::string& out_path) {
    const auto spec = mpe::synthetic_spec_from_json(read_json(spec_path));
    const auto ds = mpe::generate(spec);
    mpe::write_dataset_csv(ds, out_path);
    std::ofstream manifest(out_path + ".manifest.json");
    if (!manifest) throw std::runtime_error("cannot write " + out_path + ".manifest.json");
    manifest << mpe::dataset_manifest(ds).dump(2) << '\n';
    std::cout << "wrote " << out_path << " (" << ds.size() << " rows)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixture proportion estimation with regrouping"};
    app.require_subcommand(1);

    std::string manifest;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "Run the plain vs regrouped trial grid of a manifest");
    run->add_option("--manifest", manifest, "Run manifest (JSON)")->required();
    run->add_option("--out", out_dir, "Override the manifest's output directory");

    std::string p_grid;
    auto* sweep = app.add_subcommand("sweep", "Sweep the copy fraction over a grid");
    sweep->add_option("--manifest", manifest, "Run manifest (JSON)")->required();
    sweep->add_option("--p-grid", p_grid, "start:stop:step or comma list");
    sweep->add_option("--out", out_dir, "Override the manifest's output directory");

    std::string dist_f;
    std::string dist_h;
    auto* oracle = app.add_subcommand("oracle", "Exact kappa(F|H) for discrete distributions");
    oracle->add_option("--dist-f", dist_f, "Mixture distribution (JSON)")->required();
    oracle->add_option("--dist-h", dist_h, "Component distribution (JSON)")->required();

    std::string spec;
    std::string out_csv;
    auto* datagen = app.add_subcommand("datagen", "Write a synthetic dataset as CSV");
    datagen->add_option("--spec", spec, "Synthetic spec (JSON)")->required();
    datagen->add_option("--out", out_csv, "Output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(manifest, out_dir);
        if (*sweep) return cmd_sweep(manifest, p_grid, out_dir);
        if (*oracle) return cmd_oracle(dist_f, dist_h);
        if (*datagen) return cmd_datagen(spec, out_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
