#pragma once

#include "bsim/block/dispatcher.hpp"
#include "bsim/device/config.hpp"
#include "bsim/device/device.hpp"
#include "bsim/fs/filesystem.hpp"
#include "bsim/sim/engine.hpp"

namespace bsim {

struct StackConfig {
  Profile profile = profiles::ufs();
  BlockLayerConfig block;
  FsConfig fs;
};

// Engine, device, block layer and filesystem wired together.
class IoStack {
 public:
  explicit IoStack(const StackConfig& cfg)
      : cfg_(cfg),
        engine(cfg.profile.host.t_context_switch),
        device(engine, cfg.profile.device),
        block(engine, device, cfg.block),
        fs(engine, block, cfg.fs, cfg.profile.host) {}
  IoStack(const IoStack&) = delete;
  IoStack& operator=(const IoStack&) = delete;

  const StackConfig& config() const { return cfg_; }

 private:
  StackConfig cfg_;

 public:
  Engine engine;
  StorageDevice device;
  BlockLayer block;
  FileSystem fs;
};

}  // namespace bsim
