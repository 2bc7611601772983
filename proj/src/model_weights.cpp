#include "llem/model_weights.hpp"

#include "llem/admm.hpp"
#include "llem/priors.hpp"

namespace llem {

std::vector<WeightSpec> canonical_weight_specs(const UNetConfig& unet, Index prior_state,
                                               Index prior_expand) {
  std::vector<WeightSpec> specs = decomposition_weight_specs();
  auto append = [&specs](std::vector<WeightSpec> more) {
    for (auto& s : more) specs.push_back(std::move(s));
  };
  append(relight_weight_specs(unet));
  const IfbmambaConfig prior = mamba_prior_config(prior_state, prior_expand);
  append(ifbmamba_weight_specs(prior, std::string(kReflectancePrefix) + "/mamba"));
  append(ifbmamba_weight_specs(prior, std::string(kIlluminationPrefix) + "/mamba"));
  return specs;
}

WeightArchive init_weights(std::uint64_t seed, const UNetConfig& unet, float stddev) {
  return random_weights(canonical_weight_specs(unet), seed, stddev);
}

}  // namespace llem
