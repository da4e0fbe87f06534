#include "wsol/config.hpp"

#include <set>

namespace wsol {

RunConfig::RunConfig() { data.synthetic.side = model.input_side; }

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidArgument("config: " + path_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InvalidArgument("config: " + where(key) + " has the wrong type");
    }
  }

  /// Returns the sub-object (or nullptr when absent) and marks it seen.
  const Json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw InvalidArgument("config: unknown key " + where(it.key()));
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Json range_json(Range r) { return Json::array({r.lo, r.hi}); }

Range range_from(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw InvalidArgument("config: " + path + " must be a [lo, hi] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

template <typename E, typename Parse>
std::vector<E> enum_list(const Json& j, const std::string& path, Parse parse) {
  if (!j.is_array()) throw InvalidArgument("config: " + path + " must be an array");
  std::vector<E> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw InvalidArgument("config: " + path + " entries must be strings");
    out.push_back(parse(e.get<std::string>()));
  }
  return out;
}

void read_augment(const Json& j, AugmentSpec& spec) {
  ObjectReader r(j, "augment");
  std::string policy(to_string(spec.policy));
  r.get("policy", policy);
  spec.policy = parse_policy(policy);
  r.get("hns_grid_sizes", spec.hns_grid_sizes);
  r.get("hide_prob", spec.hide_prob);
  if (const Json* f = r.child("fill_value"); f && !f->is_null()) {
    if (!f->is_array() || f->size() != 3) throw InvalidArgument("config: augment.fill_value must be null or [r,g,b]");
    spec.fill_value = Rgb{(*f)[0].get<double>(), (*f)[1].get<double>(), (*f)[2].get<double>()};
  } else if (f) {
    spec.fill_value.reset();
  }
  if (const Json* a = r.child("area_range")) spec.area_range = range_from(*a, "augment.area_range");
  if (const Json* a = r.child("aspect_range")) spec.aspect_range = range_from(*a, "augment.aspect_range");
  r.get("max_attempts", spec.max_attempts);
  r.finish();
}

}  // namespace

Json to_json(const ModelConfig& cfg) {
  Json j;
  j["variant"] = std::string(to_string(cfg.variant));
  j["num_classes"] = cfg.num_classes;
  j["input_side"] = cfg.input_side;
  j["stage_widths"] = cfg.stage_widths;
  j["blocks_per_stage"] = cfg.blocks_per_stage;
  return j;
}

Json to_json(const AugmentSpec& spec) {
  Json j;
  j["policy"] = std::string(to_string(spec.policy));
  j["hns_grid_sizes"] = spec.hns_grid_sizes;
  j["hide_prob"] = spec.hide_prob;
  j["fill_value"] = spec.fill_value ? Json(*spec.fill_value) : Json(nullptr);
  j["area_range"] = range_json(spec.area_range);
  j["aspect_range"] = range_json(spec.aspect_range);
  j["max_attempts"] = spec.max_attempts;
  return j;
}

Json to_json(const TrainConfig& cfg) {
  Json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["base_lr"] = cfg.base_lr;
  j["lr_drop_every"] = cfg.lr_drop_every;
  j["lr_drop_factor"] = cfg.lr_drop_factor;
  j["momentum"] = cfg.momentum;
  j["weight_decay"] = cfg.weight_decay;
  j["decay_bn_params"] = cfg.decay_bn_params;
  j["seed"] = cfg.seed;
  j["augment"] = to_json(cfg.augment);
  j["batchnorm"] = {{"decay", BatchNormParams<double>{}.decay},
                    {"epsilon", BatchNormParams<double>{}.epsilon}};
  return j;
}

Json to_json(const LocalizeOptions& opt) {
  Json j;
  j["threshold_frac"] = opt.threshold_frac;
  j["connectivity"] = opt.connectivity;
  return j;
}

Json to_json(const RunConfig& cfg) {
  Json j;
  j["model"] = to_json(cfg.model);
  j["model"]["init_seed"] = cfg.init_seed;
  Json train = to_json(cfg.train);
  train.erase("augment");
  train.erase("batchnorm");
  j["train"] = std::move(train);
  j["augment"] = to_json(cfg.train.augment);
  j["eval"] = to_json(cfg.eval);
  const SyntheticSpec& s = cfg.data.synthetic;
  j["data"] = {{"num_classes", s.num_classes},
               {"per_class_train", s.per_class_train},
               {"per_class_test", s.per_class_test},
               {"side", s.side},
               {"seed", s.seed},
               {"train_manifest", cfg.data.train_manifest},
               {"test_manifest", cfg.data.test_manifest}};
  Json m;
  m["policies"] = Json::array();
  for (Policy p : cfg.matrix.policies) m["policies"].push_back(std::string(to_string(p)));
  m["batch_sizes"] = cfg.matrix.batch_sizes;
  m["variants"] = Json::array();
  for (Variant v : cfg.matrix.variants) m["variants"].push_back(std::string(to_string(v)));
  m["seeds"] = cfg.matrix.seeds;
  j["matrix"] = std::move(m);
  return j;
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig cfg;
  ObjectReader r(j, "model");
  std::string variant(to_string(cfg.variant));
  r.get("variant", variant);
  cfg.variant = parse_variant(variant);
  r.get("num_classes", cfg.num_classes);
  r.get("input_side", cfg.input_side);
  r.get("stage_widths", cfg.stage_widths);
  r.get("blocks_per_stage", cfg.blocks_per_stage);
  r.child("init_seed");
  r.finish();
  return cfg;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig cfg;
  ObjectReader top(j, "");
  if (const Json* m = top.child("model")) {
    cfg.model = model_config_from_json(*m);
    if (m->contains("init_seed")) {
      try {
        cfg.init_seed = (*m)["init_seed"].get<std::uint64_t>();
      } catch (const nlohmann::json::exception&) {
        throw InvalidArgument("config: model.init_seed has the wrong type");
      }
    }
  }
  if (const Json* t = top.child("train")) {
    ObjectReader r(*t, "train");
    r.get("epochs", cfg.train.epochs);
    r.get("batch_size", cfg.train.batch_size);
    r.get("base_lr", cfg.train.base_lr);
    r.get("lr_drop_every", cfg.train.lr_drop_every);
    r.get("lr_drop_factor", cfg.train.lr_drop_factor);
    r.get("momentum", cfg.train.momentum);
    r.get("weight_decay", cfg.train.weight_decay);
    r.get("decay_bn_params", cfg.train.decay_bn_params);
    r.get("seed", cfg.train.seed);
    r.finish();
  }
  if (const Json* a = top.child("augment")) read_augment(*a, cfg.train.augment);
  if (const Json* e = top.child("eval")) {
    ObjectReader r(*e, "eval");
    r.get("threshold_frac", cfg.eval.threshold_frac);
    r.get("connectivity", cfg.eval.connectivity);
    r.finish();
  }
  // Synthetic images match the network input unless data.side says otherwise.
  cfg.data.synthetic.side = cfg.model.input_side;
  if (const Json* d = top.child("data")) {
    ObjectReader r(*d, "data");
    r.get("num_classes", cfg.data.synthetic.num_classes);
    r.get("per_class_train", cfg.data.synthetic.per_class_train);
    r.get("per_class_test", cfg.data.synthetic.per_class_test);
    r.get("side", cfg.data.synthetic.side);
    r.get("seed", cfg.data.synthetic.seed);
    r.get("train_manifest", cfg.data.train_manifest);
    r.get("test_manifest", cfg.data.test_manifest);
    r.finish();
  }
  if (const Json* m = top.child("matrix")) {
    ObjectReader r(*m, "matrix");
    if (const Json* p = r.child("policies")) {
      cfg.matrix.policies = enum_list<Policy>(*p, "matrix.policies", parse_policy);
    }
    r.get("batch_sizes", cfg.matrix.batch_sizes);
    if (const Json* v = r.child("variants")) {
      cfg.matrix.variants = enum_list<Variant>(*v, "matrix.variants", parse_variant);
    }
    r.get("seeds", cfg.matrix.seeds);
    r.finish();
  }
  top.finish();
  cfg.train.augment.validate();
  cfg.eval.validate();
  return cfg;
}

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InvalidArgument("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw InvalidArgument("override key '" + key + "' has an empty segment");
    if (!node->is_object()) throw InvalidArgument("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

}  // namespace wsol
