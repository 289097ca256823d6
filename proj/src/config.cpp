#include "pointmtl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace pointmtl {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) {
            throw_config("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_path(const json& obj, const char* key, std::filesystem::path& out) {
    if (obj.contains(key)) out = obj.at(key).get<std::string>();
}

void parse_model(const json& obj, ModelConfig& model) {
    require_keys(obj, "model",
                 {"d_in", "m", "k_list", "edge_width", "point_conv_width", "stack_widths",
                  "d_shape", "d_point", "k_ub", "classifier_widths", "decoder_widths", "dropout_p",
                  "aggregation"});
    read(obj, "d_in", model.d_in);
    read(obj, "m", model.m);
    read(obj, "k_list", model.k_list);
    read(obj, "edge_width", model.edge_width);
    read(obj, "point_conv_width", model.point_conv_width);
    read(obj, "stack_widths", model.stack_widths);
    read(obj, "d_shape", model.d_shape);
    read(obj, "d_point", model.d_point);
    read(obj, "k_ub", model.k_ub);
    read(obj, "classifier_widths", model.classifier_widths);
    read(obj, "decoder_widths", model.decoder_widths);
    read(obj, "dropout_p", model.dropout_p);
    if (obj.contains("aggregation")) {
        model.aggregation = aggregation_from_string(obj.at("aggregation").get<std::string>());
    }
}

void parse_train(const json& obj, TrainConfig& train) {
    require_keys(obj, "train",
                 {"lr", "lr_decay", "lr_period", "batch_size", "epochs", "weights"});
    read(obj, "lr", train.lr);
    read(obj, "lr_decay", train.lr_decay);
    read(obj, "lr_period", train.lr_period);
    read(obj, "batch_size", train.batch_size);
    read(obj, "epochs", train.epochs);
    if (obj.contains("weights")) {
        const json& w = obj.at("weights");
        require_keys(w, "train.weights", {"alpha", "beta", "gamma"});
        read(w, "alpha", train.weights.alpha);
        read(w, "beta", train.weights.beta);
        read(w, "gamma", train.weights.gamma);
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw_parse(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw_config("config root must be a JSON object");
    require_keys(root, "config root",
                 {"preset", "seed", "out_dir", "dataset", "model", "train", "augment", "task_mask",
                  "eval"});

    RunConfig cfg;
    if (root.contains("preset")) {
        std::string preset = root.at("preset").get<std::string>();
        if (preset == "desk") {
            cfg.train = TrainConfig::desk_preset();
        } else if (preset != "paper") {
            throw_config("unknown preset '" + preset + "' (expected paper or desk)");
        }
    }
    read(root, "seed", cfg.train.seed);
    read_path(root, "out_dir", cfg.out_dir);
    if (root.contains("dataset")) {
        const json& d = root.at("dataset");
        require_keys(d, "dataset", {"root", "manifest"});
        read_path(d, "root", cfg.dataset_root);
        read_path(d, "manifest", cfg.manifest);
    }
    if (root.contains("model")) parse_model(root.at("model"), cfg.train.model);
    if (root.contains("train")) parse_train(root.at("train"), cfg.train);
    if (root.contains("augment")) {
        const json& a = root.at("augment");
        require_keys(a, "augment", {"noise_std", "z_rot_deg", "xy_rot_deg"});
        read(a, "noise_std", cfg.train.augment.noise_std);
        read(a, "z_rot_deg", cfg.train.augment.z_rot_deg);
        read(a, "xy_rot_deg", cfg.train.augment.xy_rot_deg);
    }
    if (root.contains("task_mask")) {
        const json& t = root.at("task_mask");
        require_keys(t, "task_mask", {"clustering", "classification", "reconstruction"});
        read(t, "clustering", cfg.train.model.task_mask.clustering);
        read(t, "classification", cfg.train.model.task_mask.classification);
        read(t, "reconstruction", cfg.train.model.task_mask.reconstruction);
    }
    if (root.contains("eval")) {
        const json& e = root.at("eval");
        require_keys(e, "eval",
                     {"probe_l2", "ahc_clusters", "partseg_fraction", "probe_widths",
                      "probe_iters"});
        read(e, "probe_l2", cfg.eval.probe_l2);
        read(e, "ahc_clusters", cfg.eval.ahc_clusters);
        read(e, "partseg_fraction", cfg.eval.partseg_fraction);
        read(e, "probe_widths", cfg.eval.probe_widths);
        read(e, "probe_iters", cfg.eval.probe_iters);
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
    json root;
    root["seed"] = cfg.train.seed;
    root["out_dir"] = cfg.out_dir.string();
    root["dataset"] = {{"root", cfg.dataset_root.string()}, {"manifest", cfg.manifest.string()}};
    const ModelConfig& m = cfg.train.model;
    root["model"] = {{"d_in", m.d_in},
                     {"m", m.m},
                     {"k_list", m.k_list},
                     {"edge_width", m.edge_width},
                     {"point_conv_width", m.point_conv_width},
                     {"stack_widths", m.stack_widths},
                     {"d_shape", m.d_shape},
                     {"d_point", m.d_point},
                     {"k_ub", m.k_ub},
                     {"classifier_widths", m.classifier_widths},
                     {"decoder_widths", m.decoder_widths},
                     {"dropout_p", m.dropout_p},
                     {"aggregation", to_string(m.aggregation)}};
    root["train"] = {{"lr", cfg.train.lr},
                     {"lr_decay", cfg.train.lr_decay},
                     {"lr_period", cfg.train.lr_period},
                     {"batch_size", cfg.train.batch_size},
                     {"epochs", cfg.train.epochs},
                     {"weights",
                      {{"alpha", cfg.train.weights.alpha},
                       {"beta", cfg.train.weights.beta},
                       {"gamma", cfg.train.weights.gamma}}}};
    root["augment"] = {{"noise_std", cfg.train.augment.noise_std},
                       {"z_rot_deg", cfg.train.augment.z_rot_deg},
                       {"xy_rot_deg", cfg.train.augment.xy_rot_deg}};
    root["task_mask"] = {{"clustering", m.task_mask.clustering},
                         {"classification", m.task_mask.classification},
                         {"reconstruction", m.task_mask.reconstruction}};
    root["eval"] = {{"probe_l2", cfg.eval.probe_l2},
                    {"ahc_clusters", cfg.eval.ahc_clusters},
                    {"partseg_fraction", cfg.eval.partseg_fraction},
                    {"probe_widths", cfg.eval.probe_widths},
                    {"probe_iters", cfg.eval.probe_iters}};
    return root.dump(2) + "\n";
}

TaskMask parse_task_mask(const std::string& spec) {
    TaskMask mask;
    mask.clustering = mask.classification = mask.reconstruction = false;
    std::istringstream ss(spec);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token == "clustering") {
            mask.clustering = true;
        } else if (token == "classification") {
            mask.classification = true;
        } else if (token == "reconstruction") {
            mask.reconstruction = true;
        } else if (token == "all") {
            mask.clustering = mask.classification = mask.reconstruction = true;
        } else if (!token.empty()) {
            throw_config("unknown task '" + token +
                         "' in mask (expected clustering, classification, reconstruction, all)");
        }
    }
    if (!mask.any()) throw_config("task mask enables no tasks");
    return mask;
}

}  // namespace pointmtl
