#include "scope/pipeline.hpp"

#include <chrono>
#include <cmath>

namespace scope {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::uint64_t obs_key(std::uint64_t scenario_seed, int frame_idx, int agent_id) {
    return Rng::combine(Rng::combine(Rng::combine(scenario_seed, 0x6f627365ULL),
                                     static_cast<std::uint64_t>(frame_idx)),
                        static_cast<std::uint64_t>(agent_id));
}

ObservationCloud transform_cloud(const ObservationCloud& cloud, const Pose2D& source,
                                 const Pose2D& ego) {
    ObservationCloud out;
    out.timestamp = cloud.timestamp;
    out.points.reserve(cloud.points.size());
    for (const auto& p : cloud.points) {
        const Vec2 q = to_ego_frame(Vec2{p[0], p[1]}, source, ego);
        out.points.push_back({q.x, q.y, p[2]});
    }
    return out;
}

}  // namespace

VolumeReport volume_from_bytes(std::size_t bytes) {
    VolumeReport r;
    r.bytes = bytes;
    r.zero = bytes == 0;
    r.log2_bytes = bytes == 0 ? 0.0 : std::log2(static_cast<double>(bytes));
    return r;
}

VolumeReport message_volume(const std::vector<AgentFrame>& frames) {
    std::size_t bytes = 0;
    for (const AgentFrame& f : frames)
        if (f.has_message) bytes += f.message.wire_bytes();
    return volume_from_bytes(bytes);
}

FrameInputs build_frame_inputs(const std::vector<World>& history, int frame_idx,
                               const RunConfig& cfg, const EncoderStack& enc) {
    if (history.empty()) throw ConfigError("run_frame: empty world history");
    const World& now = history.back();
    if (now.agents.empty()) throw ConfigError("run_frame: no agents");

    const int avail = static_cast<int>(history.size()) - 1;
    if (avail < cfg.model.tau && cfg.eval.strict_history)
        throw ConfigError("run_frame: history shorter than tau with strict_history set");
    const int tau_eff = std::min(cfg.model.tau, avail);

    const GridSpec& spec = cfg.scenario.grid;
    const std::uint64_t sseed = cfg.scenario_seed();
    const NoiseModel noise{cfg.noise.sigma_xyz, cfg.noise.sigma_heading, cfg.noise_seed()};
    const Pose2D world_frame(0.0, 0.0, 0.0);

    FrameInputs in;
    in.frame_idx = frame_idx;
    in.ego_pose = now.agent(0).pose;

    in.ego_cloud = observe(now, 0, cfg.scenario.sensor, obs_key(sseed, frame_idx, 0));
    in.f_current = encode_bev(in.ego_cloud, spec, enc);

    // ego history, aligned into the current ego frame with the believed
    // (possibly perturbed) past poses
    for (int n = tau_eff; n >= 1; --n) {
        const World& past = history[history.size() - 1 - n];
        const Pose2D past_pose = past.agent(0).pose;
        const Pose2D believed = cfg.noise.apply_to_history
                                    ? perturb_pose(past_pose, noise, 0, frame_idx - n)
                                    : past_pose;
        ObservationCloud cloud = observe(past, 0, cfg.scenario.sensor,
                                         obs_key(sseed, frame_idx - n, 0));
        in.history.push_back(encode_bev(transform_cloud(cloud, believed, in.ego_pose), spec, enc));
    }

    for (const WorldAgent& a : now.agents) {
        if (a.id == 0) continue;
        const Pose2D believed = cfg.noise.apply_to_collaborators
                                    ? perturb_pose(a.pose, noise, a.id, frame_idx)
                                    : a.pose;
        ObservationCloud cloud = observe(now, a.id, cfg.scenario.sensor,
                                         obs_key(sseed, frame_idx, a.id));
        in.collab_ids.push_back(a.id);
        in.collab_true_pose.push_back(a.pose);
        in.collab_believed_pose.push_back(believed);
        in.collab_feats.push_back(encode_bev(transform_cloud(cloud, believed, in.ego_pose), spec, enc));
        in.collab_clouds_own.push_back(std::move(cloud));
    }

    for (const WorldObject& obj : now.objects) {
        const Box7 b = to_ego_frame(obj.box, world_frame, in.ego_pose);
        if (b.cx >= spec.x_min && b.cx < spec.x_max && b.cy >= spec.y_min && b.cy < spec.y_max)
            in.gts.push_back(b);
    }
    return in;
}

FeatureGrid scope_fuse(const FeatureGrid& f_current, const TemporalBuffer& buffer,
                       const std::vector<const FeatureGrid*>& collab_feats,
                       const std::vector<int>& collab_ids, int frame_idx, const RunConfig& cfg,
                       const ModelWeights& w, ScopeRec* rec,
                       std::vector<AgentFrame>* collab_frames) {
    ScopeRec local;
    ScopeRec& r = rec ? *rec : local;

    if (collab_feats.empty() && buffer.tau() == 0) {
        // single-agent, no history: the fused feature is the ego feature
        r.bypass = true;
        return f_current;
    }
    r.bypass = false;

    const ConfidencePolicy policy{cfg.comm.threshold, cfg.comm.budget};

    if (cfg.features.context) {
        const CiaToggles ct{cfg.toggles.pl, cfg.toggles.sif};
        r.h = aggregate_context(f_current, buffer, w.cia, ct, rec ? &r.agg : nullptr);
        r.ran_cia = true;
    }

    if (cfg.features.collab) {
        r.ego_conf = confidence_map(f_current, w.dec_cls);
        r.collab_confs.clear();
        r.collab_grids.clear();
        r.collab_confs.reserve(collab_feats.size());
        r.collab_grids.reserve(collab_feats.size());
        for (std::size_t k = 0; k < collab_feats.size(); ++k) {
            const FeatureGrid& fk = *collab_feats[k];
            ConfidenceMap conf = confidence_map(fk, w.dec_cls);
            auto [mask, msg] = select_and_pack(fk, conf, policy,
                                               static_cast<std::uint32_t>(collab_ids[k]),
                                               static_cast<std::uint32_t>(frame_idx));
            r.collab_grids.push_back(reconstruct_grid(msg, fk.channels, fk.height, fk.width));
            r.collab_confs.push_back(std::move(conf));
            if (collab_frames) {
                AgentFrame af;
                af.agent_id = collab_ids[k];
                af.confidence = r.collab_confs.back();
                af.mask = std::move(mask);
                af.has_message = !msg.entries.empty();  // empty shares are not transmitted
                af.message = std::move(msg);
                collab_frames->push_back(std::move(af));
            }
        }
        std::vector<CollabInput> inputs;
        inputs.reserve(collab_feats.size());
        for (std::size_t k = 0; k < collab_feats.size(); ++k)
            inputs.push_back({&r.collab_grids[k], &r.collab_confs[k]});
        const CccToggles cct{cfg.toggles.dcm, cfg.toggles.rpp};
        r.z = ccc_forward(f_current, r.ego_conf, inputs, w.ccc, cct, cfg.eval.ref_threshold,
                          rec ? &r.ccc : nullptr);
        r.ran_ccc = true;
    }

    std::vector<const FeatureGrid*> sources;
    r.source_kinds.clear();
    if (cfg.features.context) { sources.push_back(&r.h); r.source_kinds.push_back(0); }
    if (cfg.features.collab) { sources.push_back(&r.z); r.source_kinds.push_back(1); }
    if (cfg.features.ego) { sources.push_back(&f_current); r.source_kinds.push_back(2); }

    if (cfg.toggles.iaf) {
        std::vector<SpatialMap> maps;
        if (cfg.iaf_strategy == FusionStrategy::Adaptive)
            maps = importance_maps_n(sources, w.iaf, rec ? &r.imp : nullptr);
        return fuse_sources(sources, maps, cfg.iaf_strategy, rec ? &r.fuse : nullptr);
    }

    // base-model fusion: channel concat of the three slots, 1x1 conv
    r.zero_sources.clear();
    r.zero_sources.reserve(3);
    std::vector<const FeatureGrid*> parts(3, nullptr);
    const FeatureGrid* by_kind[3] = {cfg.features.context ? &r.h : nullptr,
                                     cfg.features.collab ? &r.z : nullptr,
                                     cfg.features.ego ? &f_current : nullptr};
    for (int kind = 0; kind < 3; ++kind) {
        if (by_kind[kind]) {
            parts[kind] = by_kind[kind];
        } else {
            r.zero_sources.emplace_back(f_current.channels, f_current.height, f_current.width);
            parts[kind] = &r.zero_sources.back();
        }
    }
    FeatureGrid cat = concat_channels({parts[0], parts[1], parts[2]});
    FeatureGrid fused = w.iaf_base_fuse.forward(cat);
    r.iaf_cat = std::move(cat);
    return fused;
}

void scope_fuse_backward(const RunConfig& cfg, ModelWeights& w, const ScopeRec& rec,
                         const FeatureGrid& grad_fused) {
    if (rec.bypass) return;

    const int C = grad_fused.channels, H = grad_fused.height, W = grad_fused.width;
    FeatureGrid grad_h(C, H, W), grad_z(C, H, W);

    if (cfg.toggles.iaf) {
        const std::size_t n = rec.source_kinds.size();
        std::vector<FeatureGrid> grad_sources(n, FeatureGrid(C, H, W));
        if (cfg.iaf_strategy == FusionStrategy::Adaptive) {
            std::vector<SpatialMap> grad_maps(n, SpatialMap(H, W));
            fuse_sources_backward(rec.fuse, grad_fused, &grad_sources, &grad_maps);
            importance_maps_backward(w.iaf, rec.imp, grad_maps, &grad_sources);
        } else {
            fuse_sources_backward(rec.fuse, grad_fused, &grad_sources, nullptr);
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (rec.source_kinds[i] == 0) grad_h = std::move(grad_sources[i]);
            else if (rec.source_kinds[i] == 1) grad_z = std::move(grad_sources[i]);
        }
    } else {
        FeatureGrid grad_cat(3 * C, H, W);
        w.iaf_base_fuse.backward(rec.iaf_cat, grad_fused, &grad_cat);
        const std::size_t block = static_cast<std::size_t>(C) * H * W;
        if (cfg.features.context)
            std::copy(grad_cat.data.begin(), grad_cat.data.begin() + block, grad_h.data.begin());
        if (cfg.features.collab)
            std::copy(grad_cat.data.begin() + block, grad_cat.data.begin() + 2 * block,
                      grad_z.data.begin());
    }

    // the ego branch ends in the frozen encoder, so its gradient is dropped
    if (rec.ran_ccc) ccc_backward(w.ccc, rec.ccc, grad_z, nullptr);
    if (rec.ran_cia) aggregate_context_backward(w.cia, rec.agg, grad_h, nullptr, nullptr);
}

namespace {

std::vector<Detection> decode_and_extract(const FeatureGrid& fused, const RunConfig& cfg,
                                          const ModelWeights& w) {
    const HeadOutput heads = decode_heads(fused, w.dec_reg, w.dec_cls);
    return extract_boxes(heads, cfg.scenario.grid, cfg.eval.score_threshold, cfg.eval.nms_iou);
}

}  // namespace

FrameResult run_frame(const std::vector<World>& history, int frame_idx, const RunConfig& cfg,
                      const ModelWeights& w, const FrameOptions& opt) {
    FrameResult res;
    res.frame_idx = frame_idx;

    auto t0 = Clock::now();
    FrameInputs in = build_frame_inputs(history, frame_idx, cfg, w.encoder);
    res.metrics.ms_observe = ms_since(t0);
    res.gts = in.gts;

    const GridSpec& spec = cfg.scenario.grid;
    std::size_t bytes = 0;
    FeatureGrid fused;
    std::vector<AgentFrame> collab_frames;

    switch (cfg.mode) {
        case FusionMode::NoFusion: {
            t0 = Clock::now();
            res.detections = decode_and_extract(in.f_current, cfg, w);
            res.metrics.ms_decode = ms_since(t0);
            break;
        }
        case FusionMode::Scope: {
            TemporalBuffer buffer;
            buffer.frames = std::move(in.history);
            std::vector<const FeatureGrid*> collab_ptrs;
            for (const FeatureGrid& f : in.collab_feats) collab_ptrs.push_back(&f);

            t0 = Clock::now();
            ScopeRec rec;
            fused = scope_fuse(in.f_current, buffer, collab_ptrs, in.collab_ids, frame_idx, cfg,
                               w, opt.want_dumps ? &rec : nullptr, &collab_frames);
            res.metrics.ms_fuse = ms_since(t0);

            bytes = message_volume(collab_frames).bytes;

            t0 = Clock::now();
            res.detections = decode_and_extract(fused, cfg, w);
            res.metrics.ms_decode = ms_since(t0);

            if (opt.want_dumps) {
                res.fusion_attention = rec.fuse.attention;
                if (rec.ran_ccc && !rec.ccc.bypass && cfg.toggles.dcm) {
                    for (std::size_t l = 0; l < rec.ccc.dcm_recs.size(); ++l) {
                        DcmAttentionDump d;
                        d.scale = static_cast<int>(l);
                        d.heads = w.ccc.dcm[l].heads;
                        d.samples = rec.ccc.dcm_recs[l].k_used * w.ccc.dcm[l].keypoints;
                        d.refs = rec.ccc.dcm_recs[l].refs;
                        d.weights = rec.ccc.dcm_recs[l].weights;
                        res.dcm_attention.push_back(std::move(d));
                    }
                }
            }
            break;
        }
        case FusionMode::LateFusion: {
            t0 = Clock::now();
            std::vector<Box7> boxes;
            std::vector<double> scores;
            for (const Detection& d : decode_and_extract(in.f_current, cfg, w)) {
                boxes.push_back(d.box);
                scores.push_back(d.score);
            }
            for (std::size_t k = 0; k < in.collab_clouds_own.size(); ++k) {
                const FeatureGrid f_own = encode_bev(in.collab_clouds_own[k], spec, w.encoder);
                const std::vector<Detection> dets_k = decode_and_extract(f_own, cfg, w);
                if (!dets_k.empty())  // 7 box values + score as f32 each
                    bytes += kMessageHeaderBytes + dets_k.size() * 32;
                for (const Detection& d : dets_k) {
                    boxes.push_back(to_ego_frame(d.box, in.collab_believed_pose[k], in.ego_pose));
                    scores.push_back(d.score);
                }
            }
            for (int i : nms_rotated(boxes, scores, cfg.eval.nms_iou))
                res.detections.push_back({boxes[i], scores[i]});
            res.metrics.ms_decode = ms_since(t0);
            break;
        }
        case FusionMode::EarlyFusion: {
            t0 = Clock::now();
            ObservationCloud merged = in.ego_cloud;
            for (std::size_t k = 0; k < in.collab_clouds_own.size(); ++k) {
                const ObservationCloud aligned = transform_cloud(
                    in.collab_clouds_own[k], in.collab_believed_pose[k], in.ego_pose);
                if (!aligned.points.empty())
                    bytes += kMessageHeaderBytes + aligned.points.size() * 12;  // x, y, z as f32
                merged.points.insert(merged.points.end(), aligned.points.begin(),
                                     aligned.points.end());
            }
            const FeatureGrid f_merged = encode_bev(merged, spec, w.encoder);
            res.detections = decode_and_extract(f_merged, cfg, w);
            res.metrics.ms_decode = ms_since(t0);
            break;
        }
    }

    const VolumeReport vol = volume_from_bytes(bytes);
    res.metrics.bytes = vol.bytes;
    res.metrics.log2_bytes = vol.log2_bytes;
    res.metrics.zero_bytes = vol.zero;
    res.metrics.ap50 = evaluate_ap(res.detections, res.gts, 0.5);
    res.metrics.ap70 = evaluate_ap(res.detections, res.gts, 0.7);

    if (opt.keep_agent_frames) {
        AgentFrame ego;
        ego.agent_id = 0;
        ego.true_pose = in.ego_pose;
        ego.believed_pose = in.ego_pose;
        ego.cloud = std::move(in.ego_cloud);
        ego.features = std::move(in.f_current);
        res.agent_frames.push_back(std::move(ego));
        for (std::size_t k = 0; k < collab_frames.size(); ++k) {
            AgentFrame& af = collab_frames[k];
            af.true_pose = in.collab_true_pose[k];
            af.believed_pose = in.collab_believed_pose[k];
            af.cloud = std::move(in.collab_clouds_own[k]);
            af.features = std::move(in.collab_feats[k]);
            res.agent_frames.push_back(std::move(af));
        }
    }
    return res;
}

std::vector<World> simulate_worlds(const ScenarioConfig& sc, std::uint64_t seed) {
    std::vector<World> worlds;
    worlds.push_back(generate_world(sc.world, seed));
    for (int f = 1; f < sc.frames; ++f) worlds.push_back(step_world(worlds.back(), sc.dt));
    return worlds;
}

std::vector<FrameResult> run_scenario(const RunConfig& cfg, const ModelWeights& w,
                                      const FrameOptions& opt) {
    if (cfg.scenario.frames <= cfg.model.tau)
        throw ConfigError("scenario too short: needs frames > tau");
    const std::vector<World> worlds = simulate_worlds(cfg.scenario, cfg.scenario_seed());

    std::vector<FrameResult> out;
    for (int f = cfg.model.tau; f < cfg.scenario.frames; ++f) {
        const std::vector<World> history(worlds.begin(), worlds.begin() + f + 1);
        out.push_back(run_frame(history, f, cfg, w, opt));
    }
    return out;
}

SuiteMetrics evaluate_scenarios(const RunConfig& cfg, const ModelWeights& w, int n_scenarios) {
    std::vector<ApSample> s50, s70;
    std::size_t gt_count = 0, bytes = 0, frames = 0;
    for (int i = 0; i < n_scenarios; ++i) {
        RunConfig c = cfg;
        c.scenario.seed = cfg.scenario_seed() + static_cast<std::uint64_t>(i);
        c.scenario.seed_set = true;
        for (const FrameResult& fr : run_scenario(c, w)) {
            match_detections(fr.detections, fr.gts, 0.5, s50);
            match_detections(fr.detections, fr.gts, 0.7, s70);
            gt_count += fr.gts.size();
            bytes += fr.metrics.bytes;
            ++frames;
        }
    }
    SuiteMetrics m;
    m.ap50 = ap_from_samples(std::move(s50), gt_count);
    m.ap70 = ap_from_samples(std::move(s70), gt_count);
    const VolumeReport vol = volume_from_bytes(bytes);
    m.bytes = vol.bytes;
    m.log2_bytes = vol.log2_bytes;
    m.zero_bytes = vol.zero;
    m.frames = frames;
    return m;
}

std::vector<TrainFrame> build_train_frames(const RunConfig& cfg, const ModelWeights& w) {
    if (cfg.scenario.frames <= cfg.model.tau)
        throw ConfigError("training scenario too short: needs frames > tau");
    const std::vector<World> worlds = simulate_worlds(cfg.scenario, cfg.scenario_seed());

    std::vector<TrainFrame> out;
    for (int f = cfg.model.tau; f < cfg.scenario.frames; ++f) {
        const std::vector<World> history(worlds.begin(), worlds.begin() + f + 1);
        TrainFrame tf;
        tf.inputs = build_frame_inputs(history, f, cfg, w.encoder);
        tf.targets = assign_targets(tf.inputs.gts, cfg.scenario.grid);
        out.push_back(std::move(tf));
    }
    return out;
}

namespace {

DetectionLoss train_pass(const TrainFrame& tf, const RunConfig& cfg, ModelWeights& w,
                         const LossWeights& lw, bool with_grad) {
    TemporalBuffer buffer;
    buffer.frames = tf.inputs.history;  // copy; the record borrows frame pointers
    std::vector<const FeatureGrid*> collab_ptrs;
    for (const FeatureGrid& f : tf.inputs.collab_feats) collab_ptrs.push_back(&f);

    ScopeRec rec;
    const FeatureGrid fused = scope_fuse(tf.inputs.f_current, buffer, collab_ptrs,
                                         tf.inputs.collab_ids, tf.inputs.frame_idx, cfg, w,
                                         with_grad ? &rec : nullptr, nullptr);
    const HeadOutput heads = decode_heads(fused, w.dec_reg, w.dec_cls);
    const DetectionLoss loss = detection_loss(heads, tf.targets, lw);
    if (!with_grad) return loss;

    FeatureGrid grad_reg(7, fused.height, fused.width);
    FeatureGrid grad_cls(2, fused.height, fused.width);
    detection_loss_backward(heads, tf.targets, lw, &grad_reg, &grad_cls);

    FeatureGrid grad_fused(fused.channels, fused.height, fused.width);
    w.dec_reg.backward(fused, grad_reg, &grad_fused);
    w.dec_cls.backward(fused, grad_cls, &grad_fused);
    scope_fuse_backward(cfg, w, rec, grad_fused);
    return loss;
}

}  // namespace

DetectionLoss train_forward(const TrainFrame& tf, const RunConfig& cfg, const ModelWeights& w,
                            const LossWeights& lw) {
    return train_pass(tf, cfg, const_cast<ModelWeights&>(w), lw, /*with_grad=*/false);
}

DetectionLoss train_forward_backward(const TrainFrame& tf, const RunConfig& cfg, ModelWeights& w,
                                     const LossWeights& lw) {
    return train_pass(tf, cfg, w, lw, /*with_grad=*/true);
}

TrainResult train_toy(const RunConfig& cfg, ModelWeights& w, int steps, double lr,
                      std::ostream* log) {
    if (steps < 1) throw ConfigError("train: steps must be >= 1");
    const LossWeights lw;
    const std::vector<TrainFrame> frames = build_train_frames(cfg, w);
    const double inv_n = 1.0 / static_cast<double>(frames.size());
    NamedParams trainable = w.trainable_params();

    TrainResult res;
    for (int step = 0; step < steps; ++step) {
        for (auto& [name, t] : trainable) t->zero_grad();
        double total = 0.0;
        for (const TrainFrame& tf : frames) total += train_forward_backward(tf, cfg, w, lw).total;
        total *= inv_n;
        if (!std::isfinite(total))
            throw TrainError("train: non-finite loss at step " + std::to_string(step));
        res.loss.push_back(total);
        if (log && (step % 20 == 0 || step == steps - 1))
            (*log) << "step " << step << " loss " << total << "\n";

        const double scale = lr * inv_n;
        for (auto& [name, t] : trainable)
            for (std::size_t i = 0; i < t->val.size(); ++i) t->val[i] -= scale * t->grad[i];
    }

    double final_total = 0.0;
    for (const TrainFrame& tf : frames) final_total += train_forward(tf, cfg, w, lw).total;
    final_total *= inv_n;
    if (!std::isfinite(final_total)) throw TrainError("train: non-finite final loss");

    res.initial_loss = res.loss.front();
    res.final_loss = final_total;
    return res;
}

std::vector<AblationVariant> standard_ablation_battery(const RunConfig& base) {
    std::vector<AblationVariant> out;
    auto push = [&](const std::string& name, auto&& edit, bool rebuild = false) {
        AblationVariant v;
        v.name = name;
        v.cfg = base;
        edit(v.cfg);
        v.rebuild_weights = rebuild;
        out.push_back(std::move(v));
    };

    push("base", [](RunConfig& c) { c.toggles = {false, false, false, false, false}; });
    push("pl", [](RunConfig& c) { c.toggles = {true, false, false, false, false}; });
    push("pl_sif", [](RunConfig& c) { c.toggles = {true, true, false, false, false}; });
    push("pl_sif_dcm", [](RunConfig& c) { c.toggles = {true, true, true, false, false}; });
    push("pl_sif_dcm_rpp", [](RunConfig& c) { c.toggles = {true, true, true, true, false}; });
    push("full", [](RunConfig& c) { c.toggles = {true, true, true, true, true}; });

    push("frames_1", [](RunConfig& c) { c.model.tau = 1; }, true);
    push("frames_2", [](RunConfig& c) { c.model.tau = 2; }, true);
    push("frames_3", [](RunConfig& c) { c.model.tau = 3; }, true);

    push("keypoints_9", [](RunConfig& c) { c.model.keypoints = 9; }, true);
    push("keypoints_15", [](RunConfig& c) { c.model.keypoints = 15; }, true);
    push("keypoints_21", [](RunConfig& c) { c.model.keypoints = 21; }, true);

    push("wo_ego_feature", [](RunConfig& c) { c.features.ego = false; });
    push("wo_context_feature", [](RunConfig& c) { c.features.context = false; });
    push("wo_collab_feature", [](RunConfig& c) { c.features.collab = false; });

    push("summation_fusion", [](RunConfig& c) { c.iaf_strategy = FusionStrategy::Summation; });
    push("maximum_fusion", [](RunConfig& c) { c.iaf_strategy = FusionStrategy::Maximum; });
    push("average_fusion", [](RunConfig& c) { c.iaf_strategy = FusionStrategy::Average; });
    return out;
}

std::vector<AblationRow> ablation_run(const std::vector<AblationVariant>& variants,
                                      const ModelWeights& base_weights, int n_scenarios) {
    std::vector<AblationRow> rows;
    for (const AblationVariant& v : variants) {
        AblationRow row;
        row.name = v.name;
        row.toggles = v.cfg.toggles;
        if (v.rebuild_weights) {
            ModelWeights w;
            w.build(v.cfg);
            row.metrics = evaluate_scenarios(v.cfg, w, n_scenarios);
        } else {
            row.metrics = evaluate_scenarios(v.cfg, base_weights, n_scenarios);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "noise-xyz") return SweepAxis::NoiseXyz;
    if (s == "noise-heading") return SweepAxis::NoiseHeading;
    if (s == "bandwidth") return SweepAxis::Bandwidth;
    throw ConfigError("unknown sweep axis: " + s);
}

std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::NoiseXyz: return "noise-xyz";
        case SweepAxis::NoiseHeading: return "noise-heading";
        default: return "bandwidth";
    }
}

std::vector<SweepPoint> sweep(const RunConfig& cfg, const ModelWeights& w, SweepAxis axis,
                              const std::vector<double>& values, int n_scenarios) {
    if (values.empty()) throw ConfigError("sweep: empty value grid");
    std::vector<SweepPoint> out;
    for (double v : values) {
        RunConfig c = cfg;
        switch (axis) {
            case SweepAxis::NoiseXyz:
                if (v < 0.0 || v > 0.5) throw ConfigError("sweep: sigma_xyz outside [0, 0.5] m");
                c.noise.sigma_xyz = v;
                break;
            case SweepAxis::NoiseHeading:
                if (v < 0.0 || v > 1.0)
                    throw ConfigError("sweep: sigma_heading outside [0, 1] degrees");
                c.noise.sigma_heading = v;
                break;
            case SweepAxis::Bandwidth:
                if (v < 0.0 || v > 1.0) throw ConfigError("sweep: threshold outside [0, 1]");
                c.comm.threshold = v;
                break;
        }
        SweepPoint pt;
        pt.value = v;
        pt.metrics = evaluate_scenarios(c, w, n_scenarios);
        out.push_back(pt);
    }
    return out;
}

}  // namespace scope
