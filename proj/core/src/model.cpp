#include "scope/model.hpp"

namespace scope {

void ModelWeights::build(const RunConfig& cfg) {
    const int c = cfg.scenario.grid.channels;
    const std::uint64_t seed = cfg.seed;

    encoder.build(cfg.scenario.grid, seed);
    cia.build(c, cfg.model.tau, cfg.model.lstm_scales, cfg.model.lstm_ksize, seed,
              cfg.model.selection_variant);
    ccc.build(c, cfg.model.ccc_scales, cfg.model.heads, cfg.model.keypoints,
              cfg.collaborator_slots(), cfg.model.tie_agents, seed);
    iaf.build(c, cfg.model.iaf_shared_generator, 3, seed);
    dec_reg = Conv2d(7, c, 1, 1, 0);
    dec_reg.init(seed, "dec.reg");
    dec_cls = Conv2d(2, c, 1, 1, 0);
    dec_cls.init(seed, "dec.cls");
    // classification prior: equal biases keep the initial softmax score at
    // 0.5 while the per-channel sigmoids start low, so initial confidence
    // maps are sparse and message masking is selective from step zero
    std::fill(dec_cls.b.val.begin(), dec_cls.b.val.end(), -2.5);
    iaf_base_fuse = Conv2d(c, 3 * c, 1, 1, 0);
    iaf_base_fuse.init(seed, "iaf.base_fuse");
}

void ModelWeights::visit(const ParamFn& fn) {
    encoder.visit("encoder", fn);  // frozen
    cia.visit("cia", fn);
    ccc.visit("ccc", fn);
    iaf.visit("iaf", fn);
    dec_reg.visit("dec.reg", fn);
    dec_cls.visit("dec.cls", fn);
    iaf_base_fuse.visit("iaf.base_fuse", fn);
}

NamedParams ModelWeights::named_params() {
    NamedParams out;
    visit([&](const std::string& name, Tensor& t, bool) { out.emplace_back(name, &t); });
    return out;
}

NamedParams ModelWeights::trainable_params() {
    NamedParams out;
    visit([&](const std::string& name, Tensor& t, bool trainable) {
        if (trainable) out.emplace_back(name, &t);
    });
    return out;
}

std::uint64_t ModelWeights::hash() { return weights_hash(named_params()); }

}  // namespace scope
