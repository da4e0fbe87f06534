#pragma once

#include <string>
#include <vector>

#include "wsol/augment.hpp"
#include "wsol/cam.hpp"
#include "wsol/data.hpp"
#include "wsol/eval.hpp"
#include "wsol/json.hpp"
#include "wsol/model.hpp"
#include "wsol/train.hpp"

namespace wsol {

struct DataConfig {
  SyntheticSpec synthetic;
  /// When set, datasets are loaded from these manifests instead of generated.
  std::string train_manifest;
  std::string test_manifest;
};

/// Every knob of a CLI run. Defaults carry the reference hyperparameters
/// (momentum 0.9, lr 0.1 dropped 10x every 250 epochs, decay 1e-4, grids
/// {0,4,8,16}, crop area [0.08,1], aspect [0.75,1.3333]).
struct RunConfig {
  /// Empty stage lists mean "use the variant preset".
  ModelConfig model{Variant::toy10, 4, 64, {}, {}};
  std::uint64_t init_seed = 0;
  TrainConfig train;
  LocalizeOptions eval;
  DataConfig data;
  MatrixConfig matrix;

  RunConfig();
};

Json to_json(const ModelConfig& cfg);
Json to_json(const AugmentSpec& spec);
Json to_json(const TrainConfig& cfg);
Json to_json(const LocalizeOptions& opt);
Json to_json(const RunConfig& cfg);

ModelConfig model_config_from_json(const Json& j);
/// Strict parse: unknown keys and ill-typed values throw InvalidArgument
/// naming the dotted path. Missing keys keep their defaults.
RunConfig run_config_from_json(const Json& j);

/// Applies `key=value` with a dotted key path to a JSON document. The value
/// is parsed as JSON when possible, otherwise taken as a string.
void apply_override(Json& doc, const std::string& assignment);

}  // namespace wsol
