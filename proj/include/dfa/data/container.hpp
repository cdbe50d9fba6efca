#pragma once

#include <string>

#include "dfa/data/dataset.hpp"

namespace dfa::data {

// Single-file binary container for a synthesized biased dataset.  The file
// embeds the full generation spec plus a content digest; loading re-derives
// the digest from the payload and refuses files whose bytes have drifted.
void save_dataset(const BiasedDataset& ds, const std::string& path);

BiasedDataset load_dataset(const std::string& path);

// Convenience name used by the CLI: <base>_<permille>permille_s<seed>.dsb
std::string default_container_name(const BiasedDatasetSpec& spec);

}  // namespace dfa::data
