#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scope/pipeline.hpp"

namespace scope {

// Fixed-width, locale-independent float formatting so identical runs
// produce byte-identical files.
std::string format_double(double v);
std::string hash_hex(std::uint64_t h);

// First line of every metrics artifact: config hash, weight-snapshot
// hash and seed.
std::string provenance_line(const RunConfig& cfg, std::uint64_t weights_hash);

void write_metrics_csv(const std::string& path, const RunConfig& cfg, std::uint64_t weights_hash,
                       const std::vector<FrameResult>& frames);
void write_metrics_json(const std::string& path, const RunConfig& cfg, std::uint64_t weights_hash,
                        const std::vector<FrameResult>& frames);

void write_detections_csv(const std::string& path, const RunConfig& cfg,
                          std::uint64_t weights_hash, const std::vector<FrameResult>& frames);

void write_sweep_csv(const std::string& path, const RunConfig& cfg, std::uint64_t weights_hash,
                     SweepAxis axis, const std::vector<SweepPoint>& points);
void write_sweep_json(const std::string& path, const RunConfig& cfg, std::uint64_t weights_hash,
                      SweepAxis axis, const std::vector<SweepPoint>& points);

void write_ablation_csv(const std::string& path, const RunConfig& cfg,
                        std::uint64_t weights_hash, const std::vector<AblationRow>& rows);
void write_ablation_json(const std::string& path, const RunConfig& cfg,
                         std::uint64_t weights_hash, const std::vector<AblationRow>& rows);

void write_loss_curve_csv(const std::string& path, const RunConfig& cfg,
                          std::uint64_t weights_hash, const TrainResult& result);

void write_world_dump_json(const std::string& path, const RunConfig& cfg,
                           const std::vector<World>& worlds);

// Flat little-endian f64 grids plus a JSON sidecar describing shapes:
// per frame the fusion attention maps and the per-scale cross-attention
// weights at their reference points.
void write_frame_dumps(const std::string& dir, const FrameResult& frame);

}  // namespace scope
