#pragma once

#include <string>

#include "scope/ccc.hpp"
#include "scope/cia.hpp"
#include "scope/config.hpp"
#include "scope/iaf.hpp"
#include "scope/scenario.hpp"
#include "scope/weights.hpp"

namespace scope {

// Every parameter block of the pipeline. The observation encoder is part
// of the snapshot for reproducibility but is frozen during training; the
// classification decoder doubles as the per-agent confidence generator.
struct ModelWeights {
    EncoderStack encoder;
    CiaParams cia;
    CccParams ccc;
    IafParams iaf;
    Conv2d dec_reg;
    Conv2d dec_cls;
    Conv2d iaf_base_fuse;  // 1x1 (3C -> C); final fusion when IAF is toggled off

    void build(const RunConfig& cfg);
    void visit(const ParamFn& fn);
    NamedParams named_params();
    NamedParams trainable_params();
    std::uint64_t hash();
};

}  // namespace scope
