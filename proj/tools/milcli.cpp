#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <miladv/attack.hpp>
#include <miladv/checkpoint.hpp>
#include <miladv/dataset_io.hpp>
#include <miladv/errors.hpp>
#include <miladv/eval.hpp>
#include <miladv/idx.hpp>
#include <miladv/perturbation_io.hpp>
#include <miladv/repro.hpp>
#include <miladv/rng.hpp>
#include <miladv/train.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace miladv;

namespace {

const char* const kTool = "milcli 0.1";

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out_dir = ".";
};

// ---------------------------------------------------------------------------
// config file: JSON object or flat key=value lines; values are turned into
// `--key value` tokens placed ahead of the user's own arguments.

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::map<std::string, std::string> out;

  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
    for (const auto& [k, v] : j.items()) {
      if (v.is_string()) {
        out[k] = v.get<std::string>();
      } else if (v.is_array()) {
        std::string joined;
        for (const auto& x : v) joined += (joined.empty() ? "" : ",") + (x.is_string() ? x.get<std::string>() : x.dump());
        out[k] = joined;
      } else {
        out[k] = v.dump();
      }
    }
    return out;
  }

  std::istringstream lines(text);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(n) + ": expected key=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

bool is_global_key(const std::string& k) { return k == "seed" || k == "out-dir"; }

// Returns the argument list with config values spliced in. Globals go right
// after the program name, subcommand keys right after the subcommand token,
// so anything the user typed comes later and wins.
std::vector<std::string> splice_config(const std::vector<std::string>& args, CLI::App& app) {
  std::string config_path;
  std::size_t sub_pos = 0;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
    } else if (a.rfind("--config=", 0) == 0) {
      config_path = a.substr(9);
    }
    if (sub_pos == 0) {
      if (a == "--seed" || a == "--config" || a == "--out-dir") {
        ++i;
        continue;
      }
      if (!a.empty() && a[0] != '-') sub_pos = i;
    }
  }
  if (config_path.empty()) return args;

  CLI::App* sub = nullptr;
  if (sub_pos) {
    try {
      sub = app.get_subcommand(args[sub_pos]);
    } catch (const CLI::OptionNotFound&) {
    }
  }
  std::vector<std::string> globals, locals;
  for (const auto& [k, v] : read_config_file(config_path)) {
    std::vector<std::string>& dst = is_global_key(k) ? globals : locals;
    if (!is_global_key(k)) {
      if (!sub || !sub->get_option_no_throw("--" + k))
        throw ConfigError(config_path + ": unknown key '" + k + "'" +
                          (sub ? " for command " + sub->get_name() : ""));
    }
    dst.push_back("--" + k + "=" + v);
  }
  std::vector<std::string> out;
  out.push_back(args[0]);
  out.insert(out.end(), globals.begin(), globals.end());
  for (std::size_t i = 1; i < args.size(); ++i) {
    out.push_back(args[i]);
    if (i == sub_pos) out.insert(out.end(), locals.begin(), locals.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// reproducibility block

json resolved_options(const CLI::App& app) {
  json j = json::object();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "out-dir") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.empty() ? std::string("true") : r.back();
    } else if (opt->get_type_size() == 0) {
      j[name] = "false";
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

struct Run {
  Globals g;
  std::string command;
  json config;
  json inputs = json::object();

  void add_input(const std::string& key, const fs::path& p) {
    inputs[key] = {{"path", p.string()}, {"hash", file_hash(p)}};
  }
  json repro() const {
    return {{"tool", kTool},
            {"command", command},
            {"seed", g.seed},
            {"config", config},
            {"config_hash", json_hash(config)},
            {"inputs", inputs}};
  }
  std::string comment() const { return "repro: " + repro().dump(); }
  fs::path out(const std::string& file) const {
    fs::create_directories(g.out_dir);
    return fs::path(g.out_dir) / file;
  }
};

void announce(const fs::path& p) { std::cout << "wrote " << p.string() << "\n"; }

// ---------------------------------------------------------------------------
// option groups shared by several commands

struct ModelOpts {
  std::size_t hidden = 128;
  std::size_t attention = 64;
  std::string variant = "plain";
};

void add_model_options(CLI::App* c, ModelOpts& o) {
  c->add_option("--hidden", o.hidden, "embedding width h")->check(CLI::PositiveNumber);
  c->add_option("--attention", o.attention, "attention width a")->check(CLI::PositiveNumber);
  c->add_option("--variant", o.variant, "attention variant")->check(CLI::IsMember({"plain", "gated"}));
}

struct TrainOpts {
  std::size_t epochs = 50;
  double lr = 1e-4;
  std::string optimizer = "adam";
};

void add_train_options(CLI::App* c, TrainOpts& o) {
  c->add_option("--epochs", o.epochs)->check(CLI::PositiveNumber);
  c->add_option("--lr", o.lr, "learning rate");
  c->add_option("--optimizer", o.optimizer)->check(CLI::IsMember({"sgd", "adam"}));
}

struct AttackOpts {
  double xi = 0.2;
  std::string mode = "ave";
  std::string norm = "l2";
  std::size_t max_inner = 10;
  std::size_t max_epochs = 50;
  double delta = 0.5;
  double eta = 1e-8;
  double overshoot = 0.02;
  bool shuffle = false;
};

void add_attack_options(CLI::App* c, AttackOpts& o, bool with_xi = true) {
  if (with_xi) c->add_option("--xi", o.xi, "perturbation budget (> 0, 'inf' for none)");
  c->add_option("--mode", o.mode, "gradient aggregation")->check(CLI::IsMember({"ave", "att"}));
  c->add_option("--norm", o.norm, "projection norm")->check(CLI::IsMember({"l2", "linf"}));
  c->add_option("--max-inner", o.max_inner, "L1: inner iterations per bag");
  c->add_option("--max-epochs", o.max_epochs, "L2: universal-attack epochs");
  c->add_option("--delta", o.delta, "target fooling rate");
  c->add_option("--eta", o.eta, "step stabiliser");
  c->add_option("--overshoot", o.overshoot, "relative overshoot of each customized step");
  c->add_flag("--shuffle", o.shuffle, "shuffle bag order every universal-attack epoch");
}

ModelHyper make_hyper(const ModelOpts& o, std::uint64_t seed) {
  ModelHyper h;
  h.hidden = o.hidden;
  h.attention = o.attention;
  h.variant = parse_variant(o.variant);
  h.seed = derive_seed(seed, "init");
  return h;
}

TrainConfig make_train_config(const TrainOpts& o, std::uint64_t seed) {
  TrainConfig t;
  t.epochs = o.epochs;
  t.learning_rate = o.lr;
  t.optimizer = parse_optimizer(o.optimizer);
  t.seed = derive_seed(seed, "train");
  return t;
}

AttackConfig make_attack_config(const AttackOpts& o, std::uint64_t seed) {
  AttackConfig a;
  a.xi = o.xi;
  a.mode = parse_mode(o.mode);
  a.norm = parse_norm(o.norm);
  a.max_inner = o.max_inner;
  a.max_epochs = o.max_epochs;
  a.delta = o.delta;
  a.eta = o.eta;
  a.overshoot = o.overshoot;
  a.shuffle_each_epoch = o.shuffle;
  a.seed = derive_seed(seed, "attack");
  a.validate();
  return a;
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(what + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

AttentionMILModel load_model_for(const fs::path& model_path, const BagDataset& ds, const fs::path& data_path) {
  AttentionMILModel m = load_model(model_path);
  if (m.dim != ds.dimension)
    throw DimensionError("model " + model_path.string() + " expects d=" + std::to_string(m.dim) + " but dataset " +
                         data_path.string() + " has d=" + std::to_string(ds.dimension));
  return m;
}

std::string stem_of(const fs::path& p) {
  std::string s = p.filename().string();
  const auto dot = s.find('.');
  return dot == std::string::npos ? s : s.substr(0, dot);
}

// ---------------------------------------------------------------------------
// commands

struct GenOpts {
  bool synthetic = false;
  bool mnist = false;
  std::string name = "data";
  std::size_t n_bags = 200;
  std::size_t size_min = 5;
  std::size_t size_max = 10;
  int target_class = 9;
  double positive_fraction = 0.5;
  double separation = 4.0;
  std::size_t dimension = 10;
  double min_positive_share = 0.5;
  std::string idx_images;
  std::string idx_labels;
  bool normalize = false;
  std::string stats_from;
};

int cmd_gen_data(Run& run, const GenOpts& o) {
  if (o.synthetic == o.mnist) throw CLI::ValidationError("gen-data", "exactly one of --synthetic or --mnist is required");
  if (o.mnist && (o.idx_images.empty() || o.idx_labels.empty()))
    throw CLI::ValidationError("gen-data", "--mnist needs --idx-images and --idx-labels");
  if (o.normalize && !o.stats_from.empty())
    throw CLI::ValidationError("gen-data", "--normalize and --stats-from are mutually exclusive");

  GenerationConfig c;
  c.n_bags = o.n_bags;
  c.bag_size_min = o.size_min;
  c.bag_size_max = o.size_max;
  c.target_class = o.target_class;
  c.positive_bag_fraction = o.positive_fraction;
  c.cluster_separation = o.separation;
  c.dimension = o.dimension;
  c.min_positive_instance_fraction = o.min_positive_share;
  c.seed = derive_seed(run.g.seed, "data:" + o.name);

  BagDataset ds;
  if (o.synthetic) {
    ds = generate_synthetic_dataset(c);
  } else {
    run.add_input("idx_images", o.idx_images);
    run.add_input("idx_labels", o.idx_labels);
    const IdxImages pool = load_idx_images(o.idx_images, o.idx_labels);
    ds = build_image_bags(pool.images, pool.labels, c);
  }
  if (o.normalize) {
    ds = normalize(ds);
  } else if (!o.stats_from.empty()) {
    run.add_input("stats_from", o.stats_from);
    const BagDataset ref = load_dataset(o.stats_from);
    if (!ref.normalization_stats) throw ConfigError(o.stats_from + ": no normalization stats in its manifest");
    ds = normalize_with(ds, *ref.normalization_stats);
  }

  const fs::path bags = run.out(o.name + ".bags");
  save_bags(ds, bags);
  json generation = {{"mode", o.synthetic ? "synthetic" : "mnist"},
                     {"n_bags", c.n_bags},
                     {"bag_size_min", c.bag_size_min},
                     {"bag_size_max", c.bag_size_max},
                     {"target_class", c.target_class},
                     {"seed", c.seed}};
  if (o.synthetic) {
    generation["positive_bag_fraction"] = c.positive_bag_fraction;
    generation["cluster_separation"] = c.cluster_separation;
    generation["dimension"] = c.dimension;
    generation["min_positive_instance_fraction"] = c.min_positive_instance_fraction;
  }
  json manifest = make_manifest(ds, generation);
  manifest["bags_hash"] = file_hash(bags);
  manifest["repro"] = run.repro();
  write_json(manifest_path_for(bags), manifest);
  announce(bags);
  announce(manifest_path_for(bags));
  std::cout << ds.size() << " bags, " << ds.positives() << " positive, d=" << ds.dimension << "\n";
  return 0;
}

struct TrainCmd {
  std::string data;
  std::string name = "model";
  ModelOpts model;
  TrainOpts train;
};

int cmd_train(Run& run, const TrainCmd& o) {
  run.add_input("data", o.data);
  const BagDataset ds = load_dataset(o.data);
  const ModelHyper hyper = make_hyper(o.model, run.g.seed);
  const TrainConfig tc = make_train_config(o.train, run.g.seed);
  const TrainResult r = train(init_model(ds.dimension, hyper), ds, tc);

  const fs::path model_path = run.out(o.name + ".milmodel");
  save_model(r.model, model_path);
  const double acc = accuracy(r.model, ds);
  json meta = {{"dimension", r.model.dim},
               {"hidden", hyper.hidden},
               {"attention", hyper.attention},
               {"variant", to_string(hyper.variant)},
               {"init_seed", hyper.seed},
               {"train",
                {{"epochs", tc.epochs},
                 {"learning_rate", tc.learning_rate},
                 {"optimizer", to_string(tc.optimizer)},
                 {"seed", tc.seed}}},
               {"final_loss", r.epoch_loss.back()},
               {"train_accuracy", acc},
               {"model_hash", file_hash(model_path)},
               {"repro", run.repro()}};
  write_json(model_json_path_for(model_path), meta);

  const fs::path loss_path = run.out(o.name + ".loss.csv");
  std::ofstream loss(loss_path);
  loss << "# " << run.comment() << "\nepoch,loss\n";
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) loss << e + 1 << "," << format_double(r.epoch_loss[e]) << "\n";
  loss.close();
  announce(model_path);
  announce(model_json_path_for(model_path));
  announce(loss_path);
  std::cout << "final loss " << format_double(r.epoch_loss.back()) << ", train accuracy " << format_double(acc) << "\n";
  return 0;
}

struct AttackCmd {
  std::string model;
  std::string data;
  std::string algo = "uap";
  std::string name = "attack";
  AttackOpts attack;
};

int cmd_attack(Run& run, const AttackCmd& o) {
  if (!(o.attack.xi > 0.0)) throw ConfigError("--xi must be > 0");
  run.add_input("model", o.model);
  run.add_input("data", o.data);
  const BagDataset ds = load_dataset(o.data);
  const AttentionMILModel model = load_model_for(o.model, ds, o.data);
  const AttackConfig cfg = make_attack_config(o.attack, run.g.seed);
  const PerturbationAlgorithm algo = parse_algorithm(o.algo);

  PerturbationMeta meta;
  meta.algorithm = algo;
  meta.mode = cfg.mode;
  meta.norm = cfg.norm;
  meta.xi = cfg.xi;
  meta.source_model = stem_of(o.model);
  meta.seed = cfg.seed;

  AttackReport report;
  double acc_under = 0.0;
  if (algo == PerturbationAlgorithm::cap) {
    auto [eps, rep] = mi_cap_dataset(model, ds, cfg);
    report = std::move(rep);
    acc_under = accuracy_under(model, ds, eps);
    json j = cap_set_to_json(ds, eps, meta);
    j["repro"] = run.repro();
    const fs::path p = run.out(o.name + ".cap.json");
    write_json(p, j);
    announce(p);
  } else {
    Perturbation pert;
    if (algo == PerturbationAlgorithm::uap) {
      auto [p, rep] = mi_uap(model, ds, cfg);
      pert = std::move(p);
      report = std::move(rep);
    } else {
      pert = baseline_perturbation(algo, model.dim, cfg.xi, cfg.seed, cfg.norm);
      for (const Bag& b : ds.bags) {
        BagAttackRow row;
        row.bag_id = b.id;
        row.label = b.label;
        row.clean_prediction = predict(model, b);
        row.perturbed_prediction = predict(model, apply_perturbation(b, pert.epsilon));
        row.fooled = row.clean_prediction != row.perturbed_prediction;
        row.epsilon_l2 = pert.epsilon.norm();
        report.per_bag.push_back(row);
      }
      report.fooling_rate = fooling_rate_from_rows(report.per_bag);
    }
    pert.meta = meta;
    pert.refresh_norms();
    acc_under = accuracy_under(model, ds, pert.epsilon);
    const fs::path p = run.out(o.name + ".pert.json");
    save_perturbation(pert, p, run.repro());
    announce(p);
  }

  json rj = to_json(report);
  rj["algorithm"] = to_string(algo);
  rj["clean_accuracy"] = accuracy(model, ds);
  rj["perturbed_accuracy"] = acc_under;
  rj["decrease"] = rj["clean_accuracy"].get<double>() - acc_under;
  rj["repro"] = run.repro();
  const fs::path rp = run.out(o.name + ".report.json");
  write_json(rp, rj);
  const fs::path rows = run.out(o.name + ".rows.csv");
  write_attack_rows_csv(report.per_bag, rows, run.comment());
  announce(rp);
  announce(rows);
  std::cout << "fooling rate " << format_double(report.fooling_rate) << ", decrease "
            << format_double(rj["decrease"].get<double>()) << "\n";
  return 0;
}

struct EvalCmd {
  std::string model;
  std::string data;
  std::string perturbation;
  std::string name = "eval";
};

int cmd_eval(Run& run, const EvalCmd& o) {
  run.add_input("model", o.model);
  run.add_input("data", o.data);
  const BagDataset ds = load_dataset(o.data);
  const AttentionMILModel model = load_model_for(o.model, ds, o.data);

  MetricRow row;
  row.dataset = stem_of(o.data);
  row.model = stem_of(o.model);
  row.seed = run.g.seed;
  row.acc = accuracy(model, ds);
  row.recall = recall(model, ds);
  if (!o.perturbation.empty()) {
    run.add_input("perturbation", o.perturbation);
    const json j = read_json(o.perturbation);
    const double clean = row.acc;
    row.perturbation = stem_of(o.perturbation);
    row.mode = j.value("mode", "-");
    row.xi = j["xi"].is_null() ? std::numeric_limits<double>::infinity() : j["xi"].get<double>();
    if (j.contains("bags")) {
      const std::vector<Vector> eps = cap_set_from_json(j, ds);
      row.acc = accuracy_under(model, ds, eps);
      row.recall = recall_under(model, ds, eps);
      std::size_t correct = 0, fooled = 0;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const int clean_pred = predict(model, ds.bags[i]);
        if (clean_pred != ds.bags[i].label) continue;
        ++correct;
        fooled += predict(model, apply_perturbation(ds.bags[i], eps[i])) != clean_pred;
      }
      row.fooling_rate = correct ? static_cast<double>(fooled) / static_cast<double>(correct) : 0.0;
    } else {
      const Perturbation p = perturbation_from_json(j);
      if (static_cast<std::size_t>(p.epsilon.size()) != ds.dimension)
        throw DimensionError("perturbation " + o.perturbation + " has d=" + std::to_string(p.epsilon.size()) +
                             " but dataset " + o.data + " has d=" + std::to_string(ds.dimension));
      row.acc = accuracy_under(model, ds, p.epsilon);
      row.recall = recall_under(model, ds, p.epsilon);
      row.fooling_rate = fooling_rate(model, ds, p.epsilon);
    }
    row.decrease = clean - row.acc;
  }
  const fs::path p = run.out(o.name + ".csv");
  write_metric_rows_csv({row}, p, run.comment());
  announce(p);
  std::cout << "acc " << format_double(row.acc) << ", recall " << format_double(row.recall) << ", decrease "
            << format_double(row.decrease) << "\n";
  return 0;
}

struct SweepCmd {
  std::string model;
  std::string data;
  std::string algo = "uap";
  std::string xis = "0,0.01,0.05,0.1,0.2,0.3,0.4,0.5,1";
  std::string name = "sweep";
  AttackOpts attack;
};

int cmd_sweep(Run& run, const SweepCmd& o) {
  run.add_input("model", o.model);
  run.add_input("data", o.data);
  const BagDataset ds = load_dataset(o.data);
  const AttentionMILModel model = load_model_for(o.model, ds, o.data);
  AttackOpts a = o.attack;
  a.xi = std::numeric_limits<double>::infinity();
  const AttackConfig cfg = make_attack_config(a, run.g.seed);
  const auto rows = xi_sweep(model, ds, parse_algorithm(o.algo), parse_list(o.xis, "--xis"), cfg, stem_of(o.data),
                             stem_of(o.model));
  const fs::path p = run.out(o.name + ".csv");
  write_metric_rows_csv(rows, p, run.comment());
  announce(p);
  for (const auto& r : rows)
    std::cout << "xi " << format_double(r.xi) << ": acc " << format_double(r.acc) << ", recall "
              << format_double(r.recall) << "\n";
  return 0;
}

struct TransferCmd {
  std::string models;
  std::string data;
  std::string name = "transfer";
  AttackOpts attack;
};

int cmd_transfer(Run& run, const TransferCmd& o) {
  run.add_input("data", o.data);
  const BagDataset ds = load_dataset(o.data);
  const auto paths = split(o.models);
  if (paths.empty()) throw ConfigError("--models needs at least one model path");
  std::vector<AttentionMILModel> models;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    run.add_input("model_" + std::to_string(i), paths[i]);
    models.push_back(load_model_for(paths[i], ds, o.data));
    ids.push_back(stem_of(paths[i]));
  }
  const AttackConfig cfg = make_attack_config(o.attack, run.g.seed);
  const TransferMatrix t = transfer_matrix(models, ids, ds, cfg);

  const fs::path csv = run.out(o.name + ".csv");
  write_transfer_csv(t, csv, run.comment());
  json j = {{"sources", t.sources}, {"targets", t.targets}, {"source_fooling_rates", t.source_fooling_rates}};
  j["perturbations"] = json::array();
  for (std::size_t i = 0; i < t.perturbations.size(); ++i) {
    Perturbation p = t.perturbations[i];
    p.meta.source_model = ids[i];
    j["perturbations"].push_back(to_json(p));
  }
  j["repro"] = run.repro();
  const fs::path jp = run.out(o.name + ".json");
  write_json(jp, j);
  announce(csv);
  announce(jp);
  return 0;
}

struct DefendCmd {
  std::string train_data;
  std::string test_data;
  std::string ratios = "0,0.01,0.1";
  std::string name = "defend";
  ModelOpts model;
  TrainOpts train;
  AttackOpts attack;
};

int cmd_defend(Run& run, const DefendCmd& o) {
  run.add_input("train_data", o.train_data);
  run.add_input("test_data", o.test_data);
  const BagDataset tr = load_dataset(o.train_data);
  const BagDataset te = load_dataset(o.test_data);
  if (tr.dimension != te.dimension)
    throw DimensionError("train set " + o.train_data + " has d=" + std::to_string(tr.dimension) + " but test set " +
                         o.test_data + " has d=" + std::to_string(te.dimension));
  AttackOpts a = o.attack;
  a.mode = "att";
  run.config["mode"] = a.mode;
  const auto rows = defence_experiment(tr, te, make_hyper(o.model, run.g.seed), make_train_config(o.train, run.g.seed),
                                       make_attack_config(a, run.g.seed), parse_list(o.ratios, "--ratios"));
  const fs::path p = run.out(o.name + ".csv");
  write_defence_csv(rows, p, run.comment());
  announce(p);
  for (const auto& r : rows)
    std::cout << "ratio " << format_double(r.ratio) << ": clean " << format_double(r.clean_acc) << ", attacked "
              << format_double(r.attacked_acc) << "\n";
  return 0;
}

struct AttnCmd {
  std::string model;
  std::string data;
  std::size_t bins = 50;
  std::size_t grid = 201;
  std::string name = "attn";
};

int cmd_attn(Run& run, const AttnCmd& o) {
  run.add_input("model", o.model);
  run.add_input("data", o.data);
  const BagDataset ds = load_dataset(o.data);
  const AttentionMILModel model = load_model_for(o.model, ds, o.data);
  const std::vector<double> values = collect_attention(model, ds);
  const AttentionSummary s = attention_summary(values, o.bins, o.grid);
  const fs::path h = run.out(o.name + ".hist.csv");
  const fs::path k = run.out(o.name + ".kde.csv");
  write_histogram_csv(s, h, run.comment());
  write_kde_csv(s, k, run.comment());
  announce(h);
  announce(k);
  std::cout << values.size() << " attention values, bandwidth " << format_double(s.bandwidth) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial perturbations for attention-based multiple-instance learning"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kTool);

  Globals g;
  app.add_option("--seed", g.seed, "master seed for every random stream");
  app.add_option("--config", g.config, "JSON or key=value file; explicit flags take precedence");
  app.add_option("--out-dir", g.out_dir, "directory for outputs");

  GenOpts gen;
  auto* c_gen = app.add_subcommand("gen-data", "generate a bag dataset");
  c_gen->add_flag("--synthetic", gen.synthetic, "two-Gaussian synthetic bags");
  c_gen->add_flag("--mnist", gen.mnist, "bags of IDX images");
  c_gen->add_option("--name", gen.name, "output stem");
  c_gen->add_option("--n-bags", gen.n_bags);
  c_gen->add_option("--bag-size-min", gen.size_min);
  c_gen->add_option("--bag-size-max", gen.size_max);
  c_gen->add_option("--target-class", gen.target_class);
  c_gen->add_option("--positive-fraction", gen.positive_fraction, "share of positive bags (synthetic)");
  c_gen->add_option("--cluster-separation", gen.separation, "offset of the positive cluster (synthetic)");
  c_gen->add_option("--dimension", gen.dimension, "feature dimension (synthetic)");
  c_gen->add_option("--min-positive-share", gen.min_positive_share,
                    "minimum share of positive instances in a positive bag (synthetic)");
  c_gen->add_option("--idx-images", gen.idx_images, "IDX image file (mnist)");
  c_gen->add_option("--idx-labels", gen.idx_labels, "IDX label file (mnist)");
  c_gen->add_flag("--normalize", gen.normalize, "fit per-feature min-max scaling");
  c_gen->add_option("--stats-from", gen.stats_from, "apply the scaling stored with another .bags file");

  TrainCmd tr;
  auto* c_train = app.add_subcommand("train", "train an attention MIL model");
  c_train->add_option("--data", tr.data, ".bags file")->required();
  c_train->add_option("--name", tr.name, "output stem");
  add_model_options(c_train, tr.model);
  add_train_options(c_train, tr.train);

  AttackCmd at;
  auto* c_attack = app.add_subcommand("attack", "craft perturbations");
  c_attack->add_option("--model", at.model, ".milmodel file")->required();
  c_attack->add_option("--data", at.data, ".bags file")->required();
  c_attack->add_option("--algo", at.algo)->check(CLI::IsMember({"cap", "uap", "random", "mean"}));
  c_attack->add_option("--name", at.name, "output stem");
  add_attack_options(c_attack, at.attack);

  EvalCmd ev;
  auto* c_eval = app.add_subcommand("eval", "accuracy, recall and decrease");
  c_eval->add_option("--model", ev.model)->required();
  c_eval->add_option("--data", ev.data)->required();
  c_eval->add_option("--perturbation", ev.perturbation, ".pert.json or .cap.json file");
  c_eval->add_option("--name", ev.name, "output stem");

  SweepCmd sw;
  auto* c_sweep = app.add_subcommand("sweep", "metrics over a grid of budgets");
  c_sweep->add_option("--model", sw.model)->required();
  c_sweep->add_option("--data", sw.data)->required();
  c_sweep->add_option("--algo", sw.algo)->check(CLI::IsMember({"cap", "uap", "random", "mean"}));
  c_sweep->add_option("--xis", sw.xis, "comma-separated budgets, ascending");
  c_sweep->add_option("--name", sw.name, "output stem");
  add_attack_options(c_sweep, sw.attack, false);

  TransferCmd tf;
  auto* c_transfer = app.add_subcommand("transfer", "cross-model universal perturbation matrix");
  c_transfer->add_option("--models", tf.models, "comma-separated .milmodel files")->required();
  c_transfer->add_option("--data", tf.data)->required();
  c_transfer->add_option("--name", tf.name, "output stem");
  add_attack_options(c_transfer, tf.attack);

  DefendCmd df;
  auto* c_defend = app.add_subcommand("defend", "adversarial augmentation experiment");
  c_defend->add_option("--train-data", df.train_data)->required();
  c_defend->add_option("--test-data", df.test_data)->required();
  c_defend->add_option("--ratios", df.ratios, "comma-separated augmentation ratios");
  c_defend->add_option("--name", df.name, "output stem");
  add_model_options(c_defend, df.model);
  add_train_options(c_defend, df.train);
  add_attack_options(c_defend, df.attack);
  c_defend->remove_option(c_defend->get_option("--mode"));

  AttnCmd an;
  auto* c_attn = app.add_subcommand("attn", "attention-value histogram and density");
  c_attn->add_option("--model", an.model)->required();
  c_attn->add_option("--data", an.data)->required();
  c_attn->add_option("--bins", an.bins)->check(CLI::PositiveNumber);
  c_attn->add_option("--grid", an.grid)->check(CLI::Range(2, 100000));
  c_attn->add_option("--name", an.name, "output stem");

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = splice_config(args, app);
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  Run run;
  run.g = g;
  run.command = sub->get_name();
  run.config = resolved_options(*sub);
  run.config["seed"] = g.seed;

  try {
    if (sub == c_gen) return cmd_gen_data(run, gen);
    if (sub == c_train) return cmd_train(run, tr);
    if (sub == c_attack) return cmd_attack(run, at);
    if (sub == c_eval) return cmd_eval(run, ev);
    if (sub == c_sweep) return cmd_sweep(run, sw);
    if (sub == c_transfer) return cmd_transfer(run, tf);
    if (sub == c_defend) return cmd_defend(run, df);
    if (sub == c_attn) return cmd_attn(run, an);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
