#pragma once

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "model.hpp"
#include "train.hpp"

namespace iedr {

/// Full run configuration: the union of data, model, loss and trainer
/// settings. Unknown keys are rejected so a typo cannot silently fall back to
/// a default; the canonical-dump hash ties checkpoints and logs to the exact
/// configuration that produced them.
struct RunConfig {
    // data
    std::size_t min_records = 5;
    std::size_t eval_negatives = 99;
    std::size_t train_negatives = 2;
    bool exclude_train_items = true;

    // model
    std::size_t embed_dim = 32;
    std::size_t hidden_dim = 128;
    std::string encoder = "SIGN";
    bool include_self_pairs = true;
    bool pair_concat = false;
    std::string factor_variant = "Nonlinear";
    std::string combine = "product";
    std::size_t q_hidden = 128;

    // cicl
    bool cicl_enabled = true;
    double tau = 0.5;
    std::size_t cicl_negatives = 40;
    double neg_context_dropout = 0.5;
    std::string neggen = "Both";

    // dis
    std::string dis_mode = "BiDis";
    std::size_t dis_negatives = 5;

    // train
    std::size_t batch_size = 1024;
    std::size_t epochs = 20;
    double lr = 1e-3;
    std::string optimizer = "adam";
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    std::uint64_t seed = 1;
    std::size_t patience = 5;
    std::size_t step1_every = 1;
    std::size_t step1_steps = 1;
    std::size_t jobs = 1;

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"data",
             {{"min_records", min_records},
              {"eval_negatives", eval_negatives},
              {"train_negatives", train_negatives},
              {"exclude_train_items", exclude_train_items}}},
            {"model",
             {{"embed_dim", embed_dim},
              {"hidden_dim", hidden_dim},
              {"encoder", encoder},
              {"include_self_pairs", include_self_pairs},
              {"pair_concat", pair_concat},
              {"factor_variant", factor_variant},
              {"combine", combine},
              {"q_hidden", q_hidden}}},
            {"cicl",
             {{"enabled", cicl_enabled},
              {"tau", tau},
              {"negatives", cicl_negatives},
              {"dropout", neg_context_dropout},
              {"neggen", neggen}}},
            {"dis", {{"mode", dis_mode}, {"negatives", dis_negatives}}},
            {"train",
             {{"batch_size", batch_size},
              {"epochs", epochs},
              {"lr", lr},
              {"optimizer", optimizer},
              {"lambda1", lambda1},
              {"lambda2", lambda2},
              {"seed", seed},
              {"patience", patience},
              {"step1_every", step1_every},
              {"step1_steps", step1_steps},
              {"jobs", jobs}}}};
    }

    static RunConfig from_json(const nlohmann::json& j) {
        RunConfig cfg;
        const nlohmann::json shape = cfg.to_json();
        for (const auto& [section, body] : j.items()) {
            if (!shape.contains(section))
                throw std::invalid_argument("config: unknown section '" + section + "'");
            if (!body.is_object())
                throw std::invalid_argument("config: section '" + section + "' must be an object");
            for (const auto& [key, value] : body.items())
                if (!shape.at(section).contains(key))
                    throw std::invalid_argument("config: unknown key '" + section + "." + key +
                                                "'");
        }
        auto get = [&](const char* section, const char* key, auto& dst) {
            if (j.contains(section) && j.at(section).contains(key))
                dst = j.at(section).at(key).template get<std::decay_t<decltype(dst)>>();
        };
        get("data", "min_records", cfg.min_records);
        get("data", "eval_negatives", cfg.eval_negatives);
        get("data", "train_negatives", cfg.train_negatives);
        get("data", "exclude_train_items", cfg.exclude_train_items);
        get("model", "embed_dim", cfg.embed_dim);
        get("model", "hidden_dim", cfg.hidden_dim);
        get("model", "encoder", cfg.encoder);
        get("model", "include_self_pairs", cfg.include_self_pairs);
        get("model", "pair_concat", cfg.pair_concat);
        get("model", "factor_variant", cfg.factor_variant);
        get("model", "combine", cfg.combine);
        get("model", "q_hidden", cfg.q_hidden);
        get("cicl", "enabled", cfg.cicl_enabled);
        get("cicl", "tau", cfg.tau);
        get("cicl", "negatives", cfg.cicl_negatives);
        get("cicl", "dropout", cfg.neg_context_dropout);
        get("cicl", "neggen", cfg.neggen);
        get("dis", "mode", cfg.dis_mode);
        get("dis", "negatives", cfg.dis_negatives);
        get("train", "batch_size", cfg.batch_size);
        get("train", "epochs", cfg.epochs);
        get("train", "lr", cfg.lr);
        get("train", "optimizer", cfg.optimizer);
        get("train", "lambda1", cfg.lambda1);
        get("train", "lambda2", cfg.lambda2);
        get("train", "seed", cfg.seed);
        get("train", "patience", cfg.patience);
        get("train", "step1_every", cfg.step1_every);
        get("train", "step1_steps", cfg.step1_steps);
        get("train", "jobs", cfg.jobs);
        cfg.validate();
        return cfg;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config: " + path);
        return from_json(nlohmann::json::parse(in));
    }

    void validate() const {
        to_model_config(); // variant/combine legality
        to_train_options();
    }

    /// Dot-path override, e.g. "train.lr=0.01". Values are parsed as JSON.
    void set(const std::string& assignment) {
        auto eq = assignment.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects section.key=value");
        auto path = assignment.substr(0, eq);
        auto dot = path.find('.');
        if (dot == std::string::npos)
            throw std::invalid_argument("--set expects section.key=value");
        nlohmann::json j = to_json();
        const std::string section = path.substr(0, dot), key = path.substr(dot + 1);
        if (!j.contains(section) || !j.at(section).contains(key))
            throw std::invalid_argument("config: unknown key '" + path + "'");
        nlohmann::json value;
        try {
            value = nlohmann::json::parse(assignment.substr(eq + 1));
        } catch (const nlohmann::json::parse_error&) {
            value = assignment.substr(eq + 1); // bare strings
        }
        if (j.at(section).at(key).type() != value.type() &&
            !(j.at(section).at(key).is_number() && value.is_number()))
            throw std::invalid_argument("config: type mismatch for '" + path + "'");
        j[section][key] = value;
        *this = from_json(j);
    }

    /// Dataset presets carrying the published per-dataset loss weights.
    void apply_preset(const std::string& name) {
        if (name == "frappe") {
            lambda1 = 0.1;
            lambda2 = 0.1;
            min_records = 5;
        } else if (name == "yelp") {
            lambda1 = 0.01;
            lambda2 = 0.1;
            min_records = 5;
        } else if (name == "amazon") {
            lambda1 = 0.01;
            lambda2 = 0.01;
            min_records = 20;
        } else if (name == "synthetic") {
            lambda1 = 0.1;
            lambda2 = 0.1;
            min_records = 5;
        } else {
            throw std::invalid_argument("unknown preset: " + name);
        }
    }

    std::string hash() const {
        const std::string dump = to_json().dump();
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(detail::fnv1a64(dump)));
        return buf;
    }

    ModelConfig to_model_config() const {
        ModelConfig m;
        m.encoder.variant = encoder_variant_from(encoder);
        m.encoder.embed_dim = embed_dim;
        m.encoder.hidden_dim = hidden_dim;
        m.encoder.include_self_pairs = include_self_pairs;
        m.encoder.pair_concat = pair_concat;
        m.factors.variant = factor_variant_from(factor_variant);
        m.factors.combine = combine_from(combine);
        m.factors.hidden_dim = hidden_dim;
        m.q_hidden = q_hidden;
        m.seed = seed;
        m.encoder.validate();
        m.factors.validate();
        return m;
    }

    TrainOptions to_train_options() const {
        TrainOptions t;
        t.batch_size = batch_size;
        t.epochs = epochs;
        t.lr = lr;
        t.optimizer = optimizer;
        t.lambda1 = lambda1;
        t.lambda2 = lambda2;
        t.seed = seed;
        t.cicl_on = cicl_enabled;
        t.cicl.tau = tau;
        t.cicl.num_negatives = cicl_negatives;
        t.cicl.neg_context_dropout = neg_context_dropout;
        t.cicl.neggen_mode = neggen_from(neggen);
        t.dis.mode = dis_mode_from(dis_mode);
        t.dis.num_negatives = dis_negatives;
        t.patience = patience;
        t.step1_every = step1_every;
        t.step1_steps = step1_steps;
        t.eval.eval_negatives = eval_negatives;
        t.eval.exclude_train_items = exclude_train_items;
        t.eval.seed = seed;
        t.eval.jobs = jobs;
        t.validate();
        return t;
    }

    SplitSpec to_split_spec() const { return {min_records, eval_negatives, train_negatives}; }
};

} // namespace iedr
