// Command-line front end: gen / train / eval / ablate / spr-sweep /
// gradcheck.  Thin argument plumbing over the cmd_* functions; all heavy
// lifting lives in the headers.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mvlat/mvlat.hpp"

int main(int argc, char** argv) {
    CLI::App app{"latent-correlation multiview shared/private component learning"};
    app.require_subcommand(1);

    std::string config, out, data, checkpoint;
    std::uint64_t seed = 0;
    std::size_t max_outer = 0;
    int threads = 1;
    double tol = 1e-4;
    std::vector<double> spr;

    app.add_option("--threads", threads, "BLAS thread count")->capture_default_str();

    CLI::App* c_gen = app.add_subcommand("gen", "generate a synthetic dataset");
    c_gen->add_option("--config", config, "experiment config JSON")->required();
    c_gen->add_option("--out", out, "output directory (default: config output_dir)");
    CLI::Option* gen_seed = c_gen->add_option("--seed", seed, "override generation seed");

    CLI::App* c_train = app.add_subcommand("train", "train on an existing dataset");
    c_train->add_option("--config", config, "experiment config JSON")->required();
    c_train->add_option("--data", data, "dataset directory")->required();
    c_train->add_option("--out", out, "output directory (default: config output_dir)");
    CLI::Option* train_seed = c_train->add_option("--seed", seed, "override training seed");
    CLI::Option* train_cap =
        c_train->add_option("--max-outer-iters", max_outer, "override outer iteration cap");

    CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    c_eval->add_option("--config", config, "experiment config JSON")->required();
    c_eval->add_option("--checkpoint", checkpoint, "bundle checkpoint JSON")->required();
    c_eval->add_option("--data", data, "dataset directory")->required();
    c_eval->add_option("--out", out, "output directory (default: config output_dir)");
    CLI::Option* eval_seed = c_eval->add_option("--seed", seed, "override fresh-eval seed");

    CLI::App* c_ablate = app.add_subcommand("ablate", "run the five objective ablations");
    c_ablate->add_option("--config", config, "experiment config JSON")->required();
    c_ablate->add_option("--out", out, "output directory (default: config output_dir)");
    CLI::Option* ablate_seed = c_ablate->add_option("--seed", seed, "override cell seed");

    CLI::App* c_spr = app.add_subcommand("spr-sweep", "train/eval across SPR targets");
    c_spr->add_option("--config", config, "experiment config JSON")->required();
    c_spr->add_option("--out", out, "output directory (default: config output_dir)");
    c_spr->add_option("--spr", spr, "override SPR targets in dB");
    CLI::Option* spr_seed = c_spr->add_option("--seed", seed, "replace the seed list");

    CLI::App* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    c_grad->add_option("--tol", tol, "relative error tolerance")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    auto opt_seed = [&](CLI::Option* o) -> std::optional<std::uint64_t> {
        if (o->count()) return seed;
        return std::nullopt;
    };

    try {
        mvlat::set_blas_threads(threads);
        if (c_gen->parsed()) return mvlat::cmd_gen(config, out, opt_seed(gen_seed), std::cout);
        if (c_train->parsed()) {
            std::optional<std::size_t> cap;
            if (train_cap->count()) cap = max_outer;
            return mvlat::cmd_train(config, data, out, opt_seed(train_seed), cap, std::cout);
        }
        if (c_eval->parsed())
            return mvlat::cmd_eval(config, checkpoint, data, out, opt_seed(eval_seed), std::cout);
        if (c_ablate->parsed())
            return mvlat::cmd_ablate(config, out, opt_seed(ablate_seed), std::cout);
        if (c_spr->parsed())
            return mvlat::cmd_spr_sweep(config, spr, out, opt_seed(spr_seed), std::cout);
        if (c_grad->parsed()) return mvlat::cmd_gradcheck(std::cout, tol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}
