#include "centeratt/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "centeratt/errors.hpp"

namespace centeratt {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0') {
        throw ConfigError("bad number for " + key + ": \"" + value + "\"");
    }
    return v;
}

int parse_int(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const long v = std::strtol(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0') {
        throw ConfigError("bad integer for " + key + ": \"" + value + "\"");
    }
    return static_cast<int>(v);
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0') {
        throw ConfigError("bad integer for " + key + ": \"" + value + "\"");
    }
    return static_cast<uint64_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("bad boolean for " + key + ": \"" + value + "\"");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("empty element in list for " + key);
        out.push_back(parse_int(key, item));
    }
    if (out.empty()) throw ConfigError("empty list for " + key);
    return out;
}

void apply_key(PipelineConfig& c, const std::string& key, const std::string& value) {
    if (key == "mode") {
        if (value == "learned") c.mode = BackboneMode::kLearned;
        else if (value == "oracle") c.mode = BackboneMode::kOracle;
        else throw ConfigError("mode must be learned or oracle, got \"" + value + "\"");
    } else if (key == "precision") {
        if (value == "fp32") c.precision = Precision::kFloat32;
        else if (value == "fp16") c.precision = Precision::kHalf;
        else throw ConfigError("precision must be fp32 or fp16, got \"" + value + "\"");
    } else if (key == "second_stage") {
        if (value == "none") c.second_stage = SecondStage::kNone;
        else if (value == "baseline") c.second_stage = SecondStage::kBaseline;
        else if (value == "centeratt") c.second_stage = SecondStage::kCenterAtt;
        else throw ConfigError("second_stage must be none, baseline or centeratt");
    } else if (key == "use_fpn") {
        c.use_fpn = parse_bool(key, value);
    } else if (key == "fold_bn") {
        c.fold_bn = parse_bool(key, value);
    } else if (key == "voxel_stage") {
        if (value == "preprocess") c.voxel_stage = VoxelStage::kPreprocess;
        else if (value == "model") c.voxel_stage = VoxelStage::kModel;
        else throw ConfigError("voxel_stage must be preprocess or model");
    } else if (key == "seed") {
        c.seed = parse_u64(key, value);
    } else if (key == "voxel.x_min") {
        c.voxel.x_min = parse_double(key, value);
    } else if (key == "voxel.x_max") {
        c.voxel.x_max = parse_double(key, value);
    } else if (key == "voxel.y_min") {
        c.voxel.y_min = parse_double(key, value);
    } else if (key == "voxel.y_max") {
        c.voxel.y_max = parse_double(key, value);
    } else if (key == "voxel.z_min") {
        c.voxel.z_min = parse_double(key, value);
    } else if (key == "voxel.z_max") {
        c.voxel.z_max = parse_double(key, value);
    } else if (key == "voxel.size_x") {
        c.voxel.voxel_x = parse_double(key, value);
    } else if (key == "voxel.size_y") {
        c.voxel.voxel_y = parse_double(key, value);
    } else if (key == "voxel.size_z") {
        c.voxel.voxel_z = parse_double(key, value);
    } else if (key == "head.max_proposals") {
        c.head.max_proposals = parse_int(key, value);
    } else if (key == "head.score_threshold") {
        c.head.score_threshold = parse_double(key, value);
    } else if (key == "head.min_gaussian_radius") {
        c.head.min_gaussian_radius = parse_double(key, value);
    } else if (key == "head.gaussian_overlap") {
        c.head.gaussian_overlap = parse_double(key, value);
    } else if (key == "backbone.channels") {
        c.backbone.channels = parse_int_list(key, value);
    } else if (key == "backbone.blocks") {
        c.backbone.blocks = parse_int_list(key, value);
    } else if (key == "backbone.fpn_scales") {
        c.backbone.fpn_scales = parse_int_list(key, value);
    } else if (key == "backbone.bilinear_upsample") {
        c.backbone.bilinear_upsample = parse_bool(key, value);
    } else if (key == "roi.scales") {
        c.roi.scales = parse_int_list(key, value);
    } else if (key == "roi.mlp_dims") {
        c.roi.mlp_dims = parse_int_list(key, value);
    } else if (key == "att.num_heads") {
        c.attention.num_heads = parse_int(key, value);
    } else if (key == "att.model_dim") {
        c.attention.model_dim = parse_int(key, value);
    } else if (key == "att.ffn_dim") {
        c.attention.ffn_dim = parse_int(key, value);
    } else if (key == "att.pe_dim") {
        c.attention.pe_dim = parse_int(key, value);
    } else if (key == "att.layers") {
        c.attention.layers = parse_int(key, value);
    } else if (key == "match.lambda_cls") {
        c.match.lambda_cls = parse_double(key, value);
    } else if (key == "match.lambda_iou") {
        c.match.lambda_iou = parse_double(key, value);
    } else if (key == "match.use_3d_iou") {
        c.match.use_3d_iou = parse_bool(key, value);
    } else if (key == "eval.iou_vehicle") {
        c.eval.iou_thresholds[0] = parse_double(key, value);
    } else if (key == "eval.iou_pedestrian") {
        c.eval.iou_thresholds[1] = parse_double(key, value);
    } else if (key == "eval.iou_cyclist") {
        c.eval.iou_thresholds[2] = parse_double(key, value);
    } else if (key == "scene.vehicles") {
        c.scene.vehicles = parse_int(key, value);
    } else if (key == "scene.pedestrians") {
        c.scene.pedestrians = parse_int(key, value);
    } else if (key == "scene.cyclists") {
        c.scene.cyclists = parse_int(key, value);
    } else if (key == "scene.points_per_object") {
        c.scene.points_per_object = parse_int(key, value);
    } else if (key == "scene.background_points") {
        c.scene.background_points = parse_int(key, value);
    } else if (key == "scene.x_min") {
        c.scene.x_min = parse_double(key, value);
    } else if (key == "scene.x_max") {
        c.scene.x_max = parse_double(key, value);
    } else if (key == "scene.y_min") {
        c.scene.y_min = parse_double(key, value);
    } else if (key == "scene.y_max") {
        c.scene.y_max = parse_double(key, value);
    } else if (key == "scene.z_min") {
        c.scene.z_min = parse_double(key, value);
    } else if (key == "scene.z_max") {
        c.scene.z_max = parse_double(key, value);
    } else if (key == "scene.surface_noise") {
        c.scene.surface_noise = parse_double(key, value);
    } else if (key == "scene.min_center_dist") {
        c.scene.min_center_dist = parse_double(key, value);
    } else {
        throw ConfigError("unknown config key \"" + key + "\"");
    }
}

}  // namespace

void PipelineConfig::validate() const {
    voxel.validate();
    head.validate();
    backbone.validate();
    roi.validate();
    attention.validate();
    match.validate();
    eval.validate();
    if (roi.model_dim != attention.model_dim) {
        throw ConfigError("roi.model_dim must equal att.model_dim");
    }
    if (attention.pe_dim != attention.model_dim) {
        throw ConfigError("att.pe_dim must equal att.model_dim");
    }
    const std::vector<int> available =
        use_fpn ? backbone.fpn_scales : std::vector<int>{1};
    for (int s : roi.scales) {
        if (std::find(available.begin(), available.end(), s) == available.end()) {
            throw ConfigError("roi scale " + std::to_string(s) +
                              " has no feature map (enable fpn or adjust scales)");
        }
    }
    const int stride = backbone.max_stride();
    if (voxel.dim_x() % stride != 0 || voxel.dim_y() % stride != 0) {
        throw ConfigError("BEV grid " + std::to_string(voxel.dim_x()) + "x" +
                          std::to_string(voxel.dim_y()) + " not divisible by max stride " +
                          std::to_string(stride));
    }
}

PipelineConfig desk_config() {
    PipelineConfig c;
    c.voxel.x_min = -25.6;
    c.voxel.x_max = 25.6;
    c.voxel.y_min = -25.6;
    c.voxel.y_max = 25.6;
    c.roi.model_dim = c.attention.model_dim;
    c.validate();
    return c;
}

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig c;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              " is not `key = value`: \"" + line + "\"");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("empty key on config line " + std::to_string(lineno));
        }
        apply_key(c, key, value);
    }
    c.roi.model_dim = c.attention.model_dim;
    c.validate();
    return c;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

}  // namespace centeratt
