#pragma once

// Persistence and configuration: CSV tables (17-significant-digit decimal
// serialization), JSON checkpoints for networks and bundles, the dataset
// directory layout, and strict experiment-config parsing where unknown keys
// are errors.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvlat/mat.hpp"
#include "mvlat/mlp.hpp"
#include "mvlat/model.hpp"
#include "mvlat/synth.hpp"
#include "mvlat/trainer.hpp"
#include "mvlat/eval.hpp"

namespace mvlat {

using nlohmann::json;

// ---------------------------------------------------------------- CSV ----

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& headers,
                      const Mat& data) {
    if (headers.size() != data.cols())
        throw std::invalid_argument("write_csv: header count does not match columns");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    for (std::size_t j = 0; j < headers.size(); ++j)
        out << (j ? "," : "") << headers[j];
    out << "\n";
    for (std::size_t i = 0; i < data.rows(); ++i) {
        for (std::size_t j = 0; j < data.cols(); ++j)
            out << (j ? "," : "") << format_g17(data(i, j));
        out << "\n";
    }
    if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

struct CsvTable {
    std::vector<std::string> headers;
    Mat data;
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(path + ":1: empty file, expected header row");
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) t.headers.push_back(cell);
    }
    if (t.headers.empty())
        throw std::runtime_error(path + ":1: no columns in header");

    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            ++col;
            try {
                std::size_t used = 0;
                const double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument("trailing characters");
                values.push_back(v);
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": column " +
                                         std::to_string(col) + ": cannot parse '" + cell + "' as a number");
            }
        }
        if (col != t.headers.size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(t.headers.size()) + " columns, found " +
                                     std::to_string(col));
        ++rows;
    }
    t.data = Mat(rows, t.headers.size());
    std::copy(values.begin(), values.end(), t.data.data());
    return t;
}

// Generic string table writer for report CSVs.
inline void write_table(const std::string& path, const std::vector<std::string>& headers,
                        const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_table: cannot open " + path);
    for (std::size_t j = 0; j < headers.size(); ++j)
        out << (j ? "," : "") << headers[j];
    out << "\n";
    for (const auto& row : rows) {
        if (row.size() != headers.size())
            throw std::invalid_argument("write_table: row width mismatch");
        for (std::size_t j = 0; j < row.size(); ++j)
            out << (j ? "," : "") << row[j];
        out << "\n";
    }
    if (!out) throw std::runtime_error("write_table: write failed for " + path);
}

// ------------------------------------------------------ strict parsing ----

namespace detail {

class StrictObject {
public:
    StrictObject(const json& j, std::string context) : j_(j), ctx_(std::move(context)) {
        if (!j_.is_object())
            throw std::invalid_argument(ctx_ + ": expected a JSON object");
    }

    bool has(const std::string& key) {
        seen_.push_back(key);
        return j_.contains(key);
    }

    const json& require(const std::string& key) {
        seen_.push_back(key);
        if (!j_.contains(key))
            throw std::invalid_argument(ctx_ + ": missing required key '" + key + "'");
        return j_.at(key);
    }

    template <typename T>
    T get(const std::string& key, T fallback) {
        seen_.push_back(key);
        if (!j_.contains(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw std::invalid_argument(ctx_ + ": key '" + key + "': " + e.what());
        }
    }

    // Call after all keys were consumed; flags typos.
    void finish() const {
        for (const auto& item : j_.items()) {
            bool known = false;
            for (const auto& s : seen_)
                if (s == item.key()) {
                    known = true;
                    break;
                }
            if (!known)
                throw std::invalid_argument(ctx_ + ": unknown key '" + item.key() + "'");
        }
    }

private:
    const json& j_;
    std::string ctx_;
    std::vector<std::string> seen_;
};

} // namespace detail

// ------------------------------------------------------- Mlp <-> JSON ----

inline json mlp_to_json(const Mlp& net) {
    json layers = json::array();
    for (const auto& l : net.layers) {
        json weights = json::array();
        for (std::size_t i = 0; i < l.out; ++i) {
            json row = json::array();
            for (std::size_t j = 0; j < l.in; ++j) row.push_back(l.w(i, j));
            weights.push_back(std::move(row));
        }
        layers.push_back({{"in", l.in},
                          {"out", l.out},
                          {"activation", activation_name(l.act)},
                          {"weights", std::move(weights)},
                          {"biases", l.b}});
    }
    return json{{"layers", std::move(layers)}};
}

inline Mlp mlp_from_json(const json& j, const std::string& context) {
    detail::StrictObject top(j, context);
    const json& layers = top.require("layers");
    top.finish();
    if (!layers.is_array() || layers.empty())
        throw std::invalid_argument(context + ": 'layers' must be a non-empty array");
    Mlp net;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const std::string lctx = context + ".layers[" + std::to_string(k) + "]";
        detail::StrictObject lo(layers[k], lctx);
        Layer l;
        l.in = lo.require("in").get<std::size_t>();
        l.out = lo.require("out").get<std::size_t>();
        l.act = activation_from_name(lo.require("activation").get<std::string>());
        const json& w = lo.require("weights");
        const json& b = lo.require("biases");
        lo.finish();
        if (!w.is_array() || w.size() != l.out)
            throw std::invalid_argument(lctx + ": weights must have 'out' rows");
        l.w = Mat(l.out, l.in);
        for (std::size_t i = 0; i < l.out; ++i) {
            if (!w[i].is_array() || w[i].size() != l.in)
                throw std::invalid_argument(lctx + ": weights row " + std::to_string(i) +
                                            " must have 'in' entries");
            for (std::size_t jj = 0; jj < l.in; ++jj) l.w(i, jj) = w[i][jj].get<double>();
        }
        l.b = b.get<std::vector<double>>();
        if (l.b.size() != l.out)
            throw std::invalid_argument(lctx + ": biases must have 'out' entries");
        net.layers.push_back(std::move(l));
    }
    net.validate();
    return net;
}

// ------------------------------------------------- bundle checkpoints ----

inline constexpr int kCheckpointVersion = 1;

inline json bundle_to_json(const ModelBundle& b) {
    return json{{"format_version", kCheckpointVersion},
                {"dims",
                 {{"d", b.dims.d}, {"d1", b.dims.d1}, {"d2", b.dims.d2},
                  {"m1", b.dims.m1}, {"m2", b.dims.m2}}},
                {"networks",
                 {{"f1", mlp_to_json(b.f1)}, {"f2", mlp_to_json(b.f2)},
                  {"r1", mlp_to_json(b.r1)}, {"r2", mlp_to_json(b.r2)},
                  {"phi1", mlp_to_json(b.phi1)}, {"phi2", mlp_to_json(b.phi2)},
                  {"tau1", mlp_to_json(b.tau1)}, {"tau2", mlp_to_json(b.tau2)}}}};
}

inline ModelBundle bundle_from_json(const json& j, const std::string& context) {
    detail::StrictObject top(j, context);
    const int version = top.require("format_version").get<int>();
    if (version != kCheckpointVersion)
        throw std::invalid_argument(context + ": unsupported format_version " + std::to_string(version));
    const json& dims = top.require("dims");
    const json& nets = top.require("networks");
    top.finish();

    ModelBundle b;
    {
        detail::StrictObject d(dims, context + ".dims");
        b.dims.d = d.require("d").get<std::size_t>();
        b.dims.d1 = d.require("d1").get<std::size_t>();
        b.dims.d2 = d.require("d2").get<std::size_t>();
        b.dims.m1 = d.require("m1").get<std::size_t>();
        b.dims.m2 = d.require("m2").get<std::size_t>();
        d.finish();
    }
    detail::StrictObject n(nets, context + ".networks");
    b.f1 = mlp_from_json(n.require("f1"), context + ".networks.f1");
    b.f2 = mlp_from_json(n.require("f2"), context + ".networks.f2");
    b.r1 = mlp_from_json(n.require("r1"), context + ".networks.r1");
    b.r2 = mlp_from_json(n.require("r2"), context + ".networks.r2");
    b.phi1 = mlp_from_json(n.require("phi1"), context + ".networks.phi1");
    b.phi2 = mlp_from_json(n.require("phi2"), context + ".networks.phi2");
    b.tau1 = mlp_from_json(n.require("tau1"), context + ".networks.tau1");
    b.tau2 = mlp_from_json(n.require("tau2"), context + ".networks.tau2");
    n.finish();
    b.validate();
    return b;
}

inline void save_checkpoint(const std::string& path, const ModelBundle& b) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << bundle_to_json(b).dump(1) << "\n";
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline ModelBundle load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("load_checkpoint: " + path + ": " + e.what());
    }
    return bundle_from_json(j, path);
}

// ------------------------------------------------ GenConfig <-> JSON ----

inline json private_spec_to_json(const PrivateSpec& p) {
    return json{{"kind", p.kind == PrivateSpec::Kind::gaussian ? "gaussian" : "laplace"},
                {"param", p.param}};
}

inline PrivateSpec private_spec_from_json(const json& j, const std::string& context) {
    detail::StrictObject o(j, context);
    PrivateSpec p;
    const std::string kind = o.require("kind").get<std::string>();
    if (kind == "gaussian") p.kind = PrivateSpec::Kind::gaussian;
    else if (kind == "laplace") p.kind = PrivateSpec::Kind::laplace;
    else throw std::invalid_argument(context + ": unknown kind '" + kind + "'");
    p.param = o.require("param").get<double>();
    o.finish();
    return p;
}

inline json gen_config_to_json(const GenConfig& g) {
    json j{{"n", g.n},
           {"d_shared", g.d_shared},
           {"d_private1", g.d_private1},
           {"d_private2", g.d_private2},
           {"noise_sigma", g.noise_sigma},
           {"private1", private_spec_to_json(g.private1)},
           {"private2", private_spec_to_json(g.private2)},
           {"mixer_hidden", g.mixer_hidden},
           {"mixer_activation", activation_name(g.mixer_activation)},
           {"seed", g.seed}};
    j["target_spr_db1"] = g.target_spr_db1 ? json(*g.target_spr_db1) : json(nullptr);
    j["target_spr_db2"] = g.target_spr_db2 ? json(*g.target_spr_db2) : json(nullptr);
    return j;
}

inline GenConfig gen_config_from_json(const json& j, const std::string& context) {
    detail::StrictObject o(j, context);
    GenConfig g;
    g.n = o.get<std::size_t>("n", g.n);
    g.d_shared = o.get<std::size_t>("d_shared", g.d_shared);
    g.d_private1 = o.get<std::size_t>("d_private1", g.d_private1);
    g.d_private2 = o.get<std::size_t>("d_private2", g.d_private2);
    g.noise_sigma = o.get<double>("noise_sigma", g.noise_sigma);
    if (o.has("private1")) g.private1 = private_spec_from_json(j.at("private1"), context + ".private1");
    if (o.has("private2")) g.private2 = private_spec_from_json(j.at("private2"), context + ".private2");
    g.mixer_hidden = o.get<std::size_t>("mixer_hidden", g.mixer_hidden);
    if (o.has("mixer_activation"))
        g.mixer_activation = activation_from_name(j.at("mixer_activation").get<std::string>());
    if (o.has("target_spr_db1") && !j.at("target_spr_db1").is_null())
        g.target_spr_db1 = j.at("target_spr_db1").get<double>();
    if (o.has("target_spr_db2") && !j.at("target_spr_db2").is_null())
        g.target_spr_db2 = j.at("target_spr_db2").get<double>();
    g.seed = o.get<std::uint64_t>("seed", g.seed);
    o.finish();
    g.validate();
    return g;
}

// ---------------------------------------------- TrainConfig <-> JSON ----

inline json train_config_to_json(const TrainConfig& t) {
    return json{{"beta", t.beta},
                {"lambda", t.lambda},
                {"batch_b1", t.batch_b1},
                {"batch_b2", t.batch_b2},
                {"lr_theta", t.lr_theta},
                {"lr_eta", t.lr_eta},
                {"weight_decay_eta", t.weight_decay_eta},
                {"inner_epochs", t.inner_epochs},
                {"max_outer_iters", t.max_outer_iters},
                {"stop_matching_loss", t.stop_matching_loss},
                {"r_view1", t.r_view1},
                {"r_view2", t.r_view2},
                {"loss_variant", loss_variant_name(t.loss_variant)},
                {"indep_reg", indep_kind_name(t.indep)},
                {"barlow_lambda_offdiag", t.barlow_lambda_offdiag},
                {"seed", t.seed}};
}

inline TrainConfig train_config_from_json(const json& j, const std::string& context) {
    detail::StrictObject o(j, context);
    TrainConfig t;
    t.beta = o.get<double>("beta", t.beta);
    t.lambda = o.get<double>("lambda", t.lambda);
    t.batch_b1 = o.get<std::size_t>("batch_b1", t.batch_b1);
    t.batch_b2 = o.get<std::size_t>("batch_b2", t.batch_b2);
    t.lr_theta = o.get<double>("lr_theta", t.lr_theta);
    t.lr_eta = o.get<double>("lr_eta", t.lr_eta);
    t.weight_decay_eta = o.get<double>("weight_decay_eta", t.weight_decay_eta);
    t.inner_epochs = o.get<std::size_t>("inner_epochs", t.inner_epochs);
    t.max_outer_iters = o.get<std::size_t>("max_outer_iters", t.max_outer_iters);
    t.stop_matching_loss = o.get<double>("stop_matching_loss", t.stop_matching_loss);
    t.r_view1 = o.get<bool>("r_view1", t.r_view1);
    t.r_view2 = o.get<bool>("r_view2", t.r_view2);
    if (o.has("loss_variant"))
        t.loss_variant = loss_variant_from_name(j.at("loss_variant").get<std::string>());
    if (o.has("indep_reg"))
        t.indep = indep_kind_from_name(j.at("indep_reg").get<std::string>());
    t.barlow_lambda_offdiag = o.get<double>("barlow_lambda_offdiag", t.barlow_lambda_offdiag);
    t.seed = o.get<std::uint64_t>("seed", t.seed);
    o.finish();
    t.validate();
    return t;
}

// ------------------------------------------------- dataset directory ----

inline constexpr int kProvenanceVersion = 1;

inline std::vector<std::string> numbered_headers(const std::string& prefix, std::size_t n) {
    std::vector<std::string> h;
    h.reserve(n);
    for (std::size_t i = 0; i < n; ++i) h.push_back(prefix + std::to_string(i));
    return h;
}

inline void save_dataset(const Dataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_csv(dir + "/view1.csv", numbered_headers("x1_", ds.x1.cols()), ds.x1);
    write_csv(dir + "/view2.csv", numbered_headers("x2_", ds.x2.cols()), ds.x2);
    std::vector<std::string> lat_headers = numbered_headers("z_", ds.z.cols());
    for (const auto& h : numbered_headers("c1_", ds.c1.cols())) lat_headers.push_back(h);
    for (const auto& h : numbered_headers("c2_", ds.c2.cols())) lat_headers.push_back(h);
    write_csv(dir + "/latents.csv", lat_headers, hcat(hcat(ds.z, ds.c1), ds.c2));

    json prov{{"format_version", kProvenanceVersion},
              {"gen", gen_config_to_json(ds.provenance)},
              {"mixers", {{"mixer1", mlp_to_json(ds.mixer1)}, {"mixer2", mlp_to_json(ds.mixer2)}}}};
    std::ofstream out(dir + "/provenance.json");
    if (!out) throw std::runtime_error("save_dataset: cannot open " + dir + "/provenance.json");
    out << prov.dump(1) << "\n";
    if (!out) throw std::runtime_error("save_dataset: write failed in " + dir);
}

inline Dataset load_dataset(const std::string& dir) {
    const std::string prov_path = dir + "/provenance.json";
    std::ifstream in(prov_path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + prov_path);
    json prov;
    try {
        in >> prov;
    } catch (const json::exception& e) {
        throw std::runtime_error("load_dataset: " + prov_path + ": " + e.what());
    }
    detail::StrictObject o(prov, prov_path);
    const int version = o.require("format_version").get<int>();
    if (version != kProvenanceVersion)
        throw std::invalid_argument(prov_path + ": unsupported format_version " + std::to_string(version));
    Dataset ds;
    ds.provenance = gen_config_from_json(o.require("gen"), prov_path + ".gen");
    {
        detail::StrictObject m(o.require("mixers"), prov_path + ".mixers");
        ds.mixer1 = mlp_from_json(m.require("mixer1"), prov_path + ".mixers.mixer1");
        ds.mixer2 = mlp_from_json(m.require("mixer2"), prov_path + ".mixers.mixer2");
        m.finish();
    }
    o.finish();

    auto check_headers = [&](const CsvTable& t, const std::vector<std::string>& expected,
                             const std::string& path) {
        if (t.headers != expected) {
            std::string got;
            for (const auto& h : t.headers) got += (got.empty() ? "" : ",") + h;
            throw std::runtime_error(path + ": header mismatch vs provenance dims (got '" + got + "')");
        }
    };

    const GenConfig& g = ds.provenance;
    CsvTable v1 = read_csv(dir + "/view1.csv");
    check_headers(v1, numbered_headers("x1_", g.m1()), dir + "/view1.csv");
    CsvTable v2 = read_csv(dir + "/view2.csv");
    check_headers(v2, numbered_headers("x2_", g.m2()), dir + "/view2.csv");
    CsvTable lat = read_csv(dir + "/latents.csv");
    std::vector<std::string> lat_headers = numbered_headers("z_", g.d_shared);
    for (const auto& h : numbered_headers("c1_", g.d_private1)) lat_headers.push_back(h);
    for (const auto& h : numbered_headers("c2_", g.d_private2)) lat_headers.push_back(h);
    check_headers(lat, lat_headers, dir + "/latents.csv");

    if (v1.data.rows() != g.n || v2.data.rows() != g.n || lat.data.rows() != g.n)
        throw std::runtime_error("load_dataset: row counts in " + dir + " do not match provenance n = " +
                                 std::to_string(g.n));

    ds.x1 = std::move(v1.data);
    ds.x2 = std::move(v2.data);
    ds.z = slice_cols(lat.data, 0, g.d_shared);
    ds.c1 = slice_cols(lat.data, g.d_shared, g.d_shared + g.d_private1);
    ds.c2 = slice_cols(lat.data, g.d_shared + g.d_private1,
                       g.d_shared + g.d_private1 + g.d_private2);
    return ds;
}

// -------------------------------------------------- experiment config ----

struct ModelConfig {
    std::size_t hidden_width = 256;
    std::size_t hidden_layers = 3;
};

struct EvalConfig {
    std::uint64_t fresh_eval_seed = 1000;
    double delta = 0.0;  // <= 0 selects the automatic per-dimension step
};

struct ExperimentConfig {
    GenConfig gen;
    TrainConfig train;
    ModelConfig model;
    EvalConfig eval;
    std::string output_dir = "out";
    std::vector<double> spr_list_db;     // spr-sweep cells
    std::vector<std::uint64_t> seeds;    // multi-seed sweeps; empty = train.seed only

    ModelDims dims() const {
        return ModelDims{gen.d_shared, gen.d_private1, gen.d_private2, gen.m1(), gen.m2()};
    }

    std::vector<std::uint64_t> seed_list() const {
        return seeds.empty() ? std::vector<std::uint64_t>{train.seed} : seeds;
    }
};

inline constexpr int kConfigVersion = 1;

inline json experiment_config_to_json(const ExperimentConfig& c) {
    json j{{"version", kConfigVersion},
           {"gen", gen_config_to_json(c.gen)},
           {"train", train_config_to_json(c.train)},
           {"model", {{"hidden_width", c.model.hidden_width}, {"hidden_layers", c.model.hidden_layers}}},
           {"eval", {{"fresh_eval_seed", c.eval.fresh_eval_seed}, {"delta", c.eval.delta}}},
           {"output_dir", c.output_dir}};
    if (!c.spr_list_db.empty()) j["spr_list_db"] = c.spr_list_db;
    if (!c.seeds.empty()) j["seeds"] = c.seeds;
    return j;
}

inline ExperimentConfig experiment_config_from_json(const json& j, const std::string& context) {
    detail::StrictObject o(j, context);
    const int version = o.require("version").get<int>();
    if (version != kConfigVersion)
        throw std::invalid_argument(context + ": unsupported config version " + std::to_string(version));
    ExperimentConfig c;
    if (o.has("gen")) c.gen = gen_config_from_json(j.at("gen"), context + ".gen");
    if (o.has("train")) c.train = train_config_from_json(j.at("train"), context + ".train");
    if (o.has("model")) {
        detail::StrictObject m(j.at("model"), context + ".model");
        c.model.hidden_width = m.get<std::size_t>("hidden_width", c.model.hidden_width);
        c.model.hidden_layers = m.get<std::size_t>("hidden_layers", c.model.hidden_layers);
        m.finish();
    }
    if (o.has("eval")) {
        detail::StrictObject e(j.at("eval"), context + ".eval");
        c.eval.fresh_eval_seed = e.get<std::uint64_t>("fresh_eval_seed", c.eval.fresh_eval_seed);
        c.eval.delta = e.get<double>("delta", c.eval.delta);
        e.finish();
    }
    c.output_dir = o.get<std::string>("output_dir", c.output_dir);
    c.spr_list_db = o.get<std::vector<double>>("spr_list_db", {});
    c.seeds = o.get<std::vector<std::uint64_t>>("seeds", {});
    o.finish();
    if (c.model.hidden_width < 2)
        throw std::invalid_argument(context + ": model.hidden_width must be >= 2");
    if (c.model.hidden_layers < 1)
        throw std::invalid_argument(context + ": model.hidden_layers must be >= 1");
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return experiment_config_from_json(j, path);
}

// FNV-1a over the canonical (sorted-key) dump; stable across platforms.
inline std::string config_hash(const ExperimentConfig& c) {
    const std::string dump = experiment_config_to_json(c).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// --------------------------------------------------------- run outputs ----

// Wall-clock timing is kept out of the file by default so that reruns of the
// same config produce byte-identical CSVs; pass include_wall_time for local
// profiling output.
inline void write_history_csv(const std::string& path, const RunHistory& history,
                              bool include_wall_time = false) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(history.size());
    for (const auto& r : history)
        rows.push_back({std::to_string(r.outer_iter), format_g17(r.matching), format_g17(r.recon),
                        format_g17(r.r1), format_g17(r.r2), format_g17(r.total),
                        format_g17(include_wall_time ? r.seconds : 0.0)});
    write_table(path, {"outer_iter", "L", "V", "R1", "R2", "total", "seconds"}, rows);
}

struct MiReportRow {
    MiReport report;
    std::string config_hash;
    std::uint64_t seed = 0;
};

inline void write_mi_report_csv(const std::string& path, const std::vector<MiReportRow>& rows,
                                const std::vector<std::string>& extra_headers = {},
                                const std::vector<std::vector<std::string>>& extra_cells = {}) {
    if (!extra_cells.empty() && extra_cells.size() != rows.size())
        throw std::invalid_argument("write_mi_report_csv: extra column row count mismatch");
    std::vector<std::string> headers = extra_headers;
    for (const auto& h : MiReport::column_names()) headers.push_back(h);
    headers.push_back("config_hash");
    headers.push_back("seed");
    std::vector<std::vector<std::string>> out_rows;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<std::string> row = extra_cells.empty() ? std::vector<std::string>{} : extra_cells[i];
        for (double v : rows[i].report.values()) row.push_back(format_g17(v));
        row.push_back(rows[i].config_hash);
        row.push_back(std::to_string(rows[i].seed));
        out_rows.push_back(std::move(row));
    }
    write_table(path, headers, out_rows);
}

} // namespace mvlat
