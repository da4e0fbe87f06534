#pragma once

#include <json.hpp>

namespace wsol {

/// Insertion-ordered JSON so emitted documents keep a stable field order.
using Json = nlohmann::ordered_json;

}  // namespace wsol
