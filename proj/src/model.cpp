#include "htv/model.hpp"

namespace htv {

ModelConfig HtvModel::checked(const ModelConfig& cfg) {
    cfg.validate();
    return cfg;
}

HtvModel::HtvModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(checked(cfg)),
      init_rng_(make_rng(seed, SeedStream::kInit)),
      htpgm_(cfg_, params_, init_rng_),
      backbone_(cfg_, params_, init_rng_) {}

}  // namespace htv
