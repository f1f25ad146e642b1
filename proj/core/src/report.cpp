#include "scope/report.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace scope {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string hash_hex(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);  // binary: no platform newline translation
    if (!f) throw IoError("cannot open for writing: " + path);
    return f;
}

ordered_json provenance_json(const RunConfig& cfg, std::uint64_t weights_hash) {
    return {{"config_hash", hash_hex(config_hash(cfg))},
            {"weights_hash", hash_hex(weights_hash)},
            {"seed", cfg.seed}};
}

}  // namespace

std::string provenance_line(const RunConfig& cfg, std::uint64_t weights_hash) {
    return "# config_hash=" + hash_hex(config_hash(cfg)) + " weights_hash=" +
           hash_hex(weights_hash) + " seed=" + std::to_string(cfg.seed);
}

void write_metrics_csv(const std::string& path, const RunConfig& cfg, std::uint64_t weights_hash,
                       const std::vector<FrameResult>& frames) {
    std::ofstream f = open_out(path);
    f << provenance_line(cfg, weights_hash) << "\n";
    f << "frame,ap50,ap70,bytes,log2_bytes,zero_bytes,detections,gts\n";
    for (const FrameResult& fr : frames) {
        f << fr.frame_idx << ',' << format_double(fr.metrics.ap50) << ','
          << format_double(fr.metrics.ap70) << ',' << fr.metrics.bytes << ','
          << format_double(fr.metrics.log2_bytes) << ',' << (fr.metrics.zero_bytes ? 1 : 0) << ','
          << fr.detections.size() << ',' << fr.gts.size() << "\n";
    }
}

void write_metrics_json(const std::string& path, const RunConfig& cfg, std::uint64_t weights_hash,
                        const std::vector<FrameResult>& frames) {
    ordered_json j;
    j["provenance"] = provenance_json(cfg, weights_hash);
    j["frames"] = ordered_json::array();
    for (const FrameResult& fr : frames) {
        j["frames"].push_back({{"frame", fr.frame_idx},
                               {"ap50", fr.metrics.ap50},
                               {"ap70", fr.metrics.ap70},
                               {"bytes", fr.metrics.bytes},
                               {"log2_bytes", fr.metrics.log2_bytes},
                               {"zero_bytes", fr.metrics.zero_bytes},
                               {"detections", fr.detections.size()},
                               {"gts", fr.gts.size()}});
    }
    open_out(path) << j.dump(2) << "\n";
}

void write_detections_csv(const std::string& path, const RunConfig& cfg,
                          std::uint64_t weights_hash, const std::vector<FrameResult>& frames) {
    std::ofstream f = open_out(path);
    f << provenance_line(cfg, weights_hash) << "\n";
    f << "frame,score,cx,cy,cz,length,width,height,yaw\n";
    for (const FrameResult& fr : frames) {
        for (const Detection& d : fr.detections) {
            f << fr.frame_idx << ',' << format_double(d.score) << ',' << format_double(d.box.cx)
              << ',' << format_double(d.box.cy) << ',' << format_double(d.box.cz) << ','
              << format_double(d.box.length) << ',' << format_double(d.box.width) << ','
              << format_double(d.box.height) << ',' << format_double(d.box.yaw) << "\n";
        }
    }
}

void write_sweep_csv(const std::string& path, const RunConfig& cfg, std::uint64_t weights_hash,
                     SweepAxis axis, const std::vector<SweepPoint>& points) {
    std::ofstream f = open_out(path);
    f << provenance_line(cfg, weights_hash) << "\n";
    f << "axis,value,ap50,ap70,bytes,log2_bytes\n";
    for (const SweepPoint& p : points) {
        f << to_string(axis) << ',' << format_double(p.value) << ','
          << format_double(p.metrics.ap50) << ',' << format_double(p.metrics.ap70) << ','
          << p.metrics.bytes << ',' << format_double(p.metrics.log2_bytes) << "\n";
    }
}

void write_sweep_json(const std::string& path, const RunConfig& cfg, std::uint64_t weights_hash,
                      SweepAxis axis, const std::vector<SweepPoint>& points) {
    ordered_json j;
    j["provenance"] = provenance_json(cfg, weights_hash);
    j["axis"] = to_string(axis);
    j["points"] = ordered_json::array();
    for (const SweepPoint& p : points)
        j["points"].push_back({{"value", p.value},
                               {"ap50", p.metrics.ap50},
                               {"ap70", p.metrics.ap70},
                               {"bytes", p.metrics.bytes},
                               {"log2_bytes", p.metrics.log2_bytes}});
    open_out(path) << j.dump(2) << "\n";
}

namespace {

std::string toggle_string(const ComponentToggles& t) {
    std::string s;
    s += t.pl ? '1' : '0';
    s += t.sif ? '1' : '0';
    s += t.dcm ? '1' : '0';
    s += t.rpp ? '1' : '0';
    s += t.iaf ? '1' : '0';
    return s;
}

}  // namespace

void write_ablation_csv(const std::string& path, const RunConfig& cfg,
                        std::uint64_t weights_hash, const std::vector<AblationRow>& rows) {
    std::ofstream f = open_out(path);
    f << provenance_line(cfg, weights_hash) << "\n";
    f << "name,pl,sif,dcm,rpp,iaf,ap50,ap70,bytes,log2_bytes\n";
    for (const AblationRow& r : rows) {
        f << r.name << ',' << (r.toggles.pl ? 1 : 0) << ',' << (r.toggles.sif ? 1 : 0) << ','
          << (r.toggles.dcm ? 1 : 0) << ',' << (r.toggles.rpp ? 1 : 0) << ','
          << (r.toggles.iaf ? 1 : 0) << ',' << format_double(r.metrics.ap50) << ','
          << format_double(r.metrics.ap70) << ',' << r.metrics.bytes << ','
          << format_double(r.metrics.log2_bytes) << "\n";
    }
}

void write_ablation_json(const std::string& path, const RunConfig& cfg,
                         std::uint64_t weights_hash, const std::vector<AblationRow>& rows) {
    ordered_json j;
    j["provenance"] = provenance_json(cfg, weights_hash);
    j["rows"] = ordered_json::array();
    for (const AblationRow& r : rows)
        j["rows"].push_back({{"name", r.name},
                             {"toggles", toggle_string(r.toggles)},
                             {"ap50", r.metrics.ap50},
                             {"ap70", r.metrics.ap70},
                             {"bytes", r.metrics.bytes},
                             {"log2_bytes", r.metrics.log2_bytes}});
    open_out(path) << j.dump(2) << "\n";
}

void write_loss_curve_csv(const std::string& path, const RunConfig& cfg,
                          std::uint64_t weights_hash, const TrainResult& result) {
    std::ofstream f = open_out(path);
    f << provenance_line(cfg, weights_hash) << "\n";
    f << "step,loss\n";
    for (std::size_t i = 0; i < result.loss.size(); ++i)
        f << i << ',' << format_double(result.loss[i]) << "\n";
    f << result.loss.size() << ',' << format_double(result.final_loss) << "\n";
}

void write_world_dump_json(const std::string& path, const RunConfig& cfg,
                           const std::vector<World>& worlds) {
    ordered_json j;
    j["provenance"] = {{"config_hash", hash_hex(config_hash(cfg))},
                       {"seed", cfg.scenario_seed()}};
    j["frames"] = ordered_json::array();
    for (const World& w : worlds) {
        ordered_json jw;
        jw["time"] = w.time;
        jw["objects"] = ordered_json::array();
        for (const WorldObject& o : w.objects)
            jw["objects"].push_back({{"id", o.id},
                                     {"box", {o.box.cx, o.box.cy, o.box.cz, o.box.length,
                                              o.box.width, o.box.height, o.box.yaw}},
                                     {"velocity", {o.vx, o.vy}}});
        jw["agents"] = ordered_json::array();
        for (const WorldAgent& a : w.agents)
            jw["agents"].push_back({{"id", a.id},
                                    {"pose", {a.pose.x, a.pose.y, a.pose.heading}},
                                    {"range", a.range}});
        j["frames"].push_back(std::move(jw));
    }
    open_out(path) << j.dump(2) << "\n";
}

void write_frame_dumps(const std::string& dir, const FrameResult& frame) {
    const std::string base = dir + "/frame_" + std::to_string(frame.frame_idx);

    if (!frame.fusion_attention.empty()) {
        const int n = static_cast<int>(frame.fusion_attention.size());
        const int h = frame.fusion_attention[0].height, w = frame.fusion_attention[0].width;
        std::ofstream bin = open_out(base + "_fusion_attention.bin");
        for (const SpatialMap& m : frame.fusion_attention)
            bin.write(reinterpret_cast<const char*>(m.data.data()),
                      static_cast<std::streamsize>(m.data.size() * sizeof(double)));
        ordered_json side;
        side["shape"] = {n, h, w};
        side["dtype"] = "float64-le";
        side["layout"] = "source-major, row-major per map";
        open_out(base + "_fusion_attention.json") << side.dump(2) << "\n";
    }

    for (const DcmAttentionDump& d : frame.dcm_attention) {
        const std::string stem = base + "_dcm_scale" + std::to_string(d.scale);
        std::ofstream bin = open_out(stem + ".bin");
        bin.write(reinterpret_cast<const char*>(d.weights.data()),
                  static_cast<std::streamsize>(d.weights.size() * sizeof(double)));
        ordered_json side;
        side["shape"] = {static_cast<int>(d.refs.size()), d.heads, d.samples};
        side["dtype"] = "float64-le";
        side["layout"] = "reference-point major, then head, then sample";
        side["reference_points"] = ordered_json::array();
        for (const RefPoint& q : d.refs) side["reference_points"].push_back({q.h, q.w});
        open_out(stem + ".json") << side.dump(2) << "\n";
    }
}

}  // namespace scope
