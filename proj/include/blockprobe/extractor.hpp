#pragma once

#include "embedding.hpp"
#include "error.hpp"
#include "feature_store.hpp"
#include "manifest.hpp"

#include "json.hpp"

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

/**
 * @file extractor.hpp
 *
 * @brief Image loading, sidecar-declared preprocessing, five-block inference
 * and global average pooling.
 */

namespace blockprobe {

/// Output name, channel count and spatial size (at 224 x 224 input) of one tapped block.
struct BlockTap {
    const char* output_name;
    int channels;
    int spatial;
};

inline constexpr std::array<BlockTap, 5> block_taps{{
    {"block1", 64, 112},
    {"block2", 256, 56},
    {"block3", 512, 28},
    {"block4", 1024, 14},
    {"block5", 2048, 7},
}};

inline const BlockTap& block_tap(int block) {
    if (block < 1 || block > 5) {
        throw ConfigError("block index must be in 1..5, got " + std::to_string(block));
    }
    return block_taps[static_cast<std::size_t>(block - 1)];
}

/**
 * Preprocessing declared by the model export: resize to input size with the
 * named filter, scale pixels to [0, 1], then (x - mean) / std per channel.
 */
struct PreprocSpec {
    int input_height = 224;
    int input_width = 224;
    std::string channel_order = "RGB";
    std::array<double, 3> mean{0.485, 0.456, 0.406};
    std::array<double, 3> std_dev{0.229, 0.224, 0.225};
    std::string resize_filter = "bilinear";
    /// Keys beyond the required ones, carried through unchanged.
    nlohmann::json extra = nlohmann::json::object();

    void validate() const {
        if (input_height != 224 || input_width != 224) {
            throw ConfigError("input size must be 224 x 224");
        }
        if (channel_order != "RGB") {
            throw ConfigError("unsupported channel order '" + channel_order + "'");
        }
        if (resize_filter != "bilinear") {
            throw ConfigError("unsupported resize filter '" + resize_filter + "'");
        }
        for (int c = 0; c < 3; ++c) {
            if (!(std_dev[c] > 0) || !std::isfinite(std_dev[c]) || !std::isfinite(mean[c])) {
                throw ConfigError("per-channel std must be finite and > 0, mean finite");
            }
        }
    }

    bool operator==(const PreprocSpec&) const = default;
};

inline nlohmann::json to_json(const PreprocSpec& s) {
    nlohmann::json j = s.extra;
    j["input_size"] = {s.input_height, s.input_width};
    j["channel_order"] = s.channel_order;
    j["mean"] = s.mean;
    j["std"] = s.std_dev;
    j["resize_filter"] = s.resize_filter;
    return j;
}

inline PreprocSpec preproc_from_json(const nlohmann::json& j) {
    PreprocSpec s;
    try {
        auto size = j.at("input_size");
        s.input_height = size.at(0).get<int>();
        s.input_width = size.at(1).get<int>();
        s.channel_order = j.at("channel_order").get<std::string>();
        s.mean = j.at("mean").get<std::array<double, 3>>();
        s.std_dev = j.at("std").get<std::array<double, 3>>();
        s.resize_filter = j.at("resize_filter").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed preprocessing sidecar: ") + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        if (k != "input_size" && k != "channel_order" && k != "mean" && k != "std" && k != "resize_filter") {
            s.extra[k] = it.value();
        }
    }
    s.validate();
    return s;
}

inline PreprocSpec read_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open sidecar " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("sidecar " + path.string() + " is not valid JSON: " + e.what());
    }
    return preproc_from_json(j);
}

inline void write_sidecar(const PreprocSpec& spec, const std::filesystem::path& path) {
    spec.validate();
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write sidecar " + path.string());
    }
    out << to_json(spec).dump(2) << '\n';
    if (!out) {
        throw IoError("failed writing sidecar " + path.string());
    }
}

/// RGB image, CV_32FC3, values in [0, 1].
struct ImageTensor {
    cv::Mat rgb;

    int height() const { return rgb.rows; }
    int width() const { return rgb.cols; }
};

/**
 * Decodes PNG or JPEG bytes. Grayscale is promoted to three equal channels
 * and alpha is composited over white. Streams that lack their end marker
 * (PNG IEND, JPEG EOI) are rejected as truncated.
 */
inline ImageTensor decode_image(std::span<const unsigned char> bytes, const std::string& name = "image") {
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    const unsigned char* u = bytes.data();
    if (bytes.empty()) {
        throw DecodeError(name + ": empty file");
    }
    if (bytes.size() >= 8 && std::memcmp(u, png_sig, 8) == 0) {
        if (bytes.size() < 20 || std::memcmp(u + bytes.size() - 8, "IEND", 4) != 0) {
            throw DecodeError(name + ": truncated PNG (no IEND chunk)");
        }
    } else if (bytes.size() >= 2 && u[0] == 0xFF && u[1] == 0xD8) {
        std::size_t end = bytes.size();
        while (end > 2 && u[end - 1] == 0) {
            --end;
        }
        if (end < 4 || u[end - 2] != 0xFF || u[end - 1] != 0xD9) {
            throw DecodeError(name + ": truncated JPEG (no EOI marker)");
        }
    }

    cv::Mat raw = cv::imdecode(cv::Mat(1, static_cast<int>(bytes.size()), CV_8U, const_cast<unsigned char*>(u)),
                               cv::IMREAD_UNCHANGED);
    if (raw.empty()) {
        throw DecodeError(name + ": not a decodable image");
    }

    double scale = 1.0;
    switch (raw.depth()) {
        case CV_8U:
            scale = 1.0 / 255;
            break;
        case CV_16U:
            scale = 1.0 / 65535;
            break;
        case CV_32F:
            break;
        default:
            throw DecodeError(name + ": unsupported pixel depth");
    }
    cv::Mat f;
    raw.convertTo(f, CV_32F, scale);

    ImageTensor out;
    switch (f.channels()) {
        case 1:
            cv::cvtColor(f, out.rgb, cv::COLOR_GRAY2RGB);
            break;
        case 2:
        case 4: {
            std::vector<cv::Mat> ch;
            cv::split(f, ch);
            cv::Mat alpha = ch.back();
            cv::Mat color;
            if (f.channels() == 2) {
                cv::cvtColor(ch[0], color, cv::COLOR_GRAY2RGB);
            } else {
                cv::merge(std::vector<cv::Mat>{ch[2], ch[1], ch[0]}, color);
            }
            cv::Mat a3;
            cv::merge(std::vector<cv::Mat>{alpha, alpha, alpha}, a3);
            out.rgb = color.mul(a3) + (cv::Scalar::all(1) - a3);
            break;
        }
        case 3:
            cv::cvtColor(f, out.rgb, cv::COLOR_BGR2RGB);
            break;
        default:
            throw DecodeError(name + ": unsupported channel count");
    }
    cv::min(out.rgb, 1.0, out.rgb);
    cv::max(out.rgb, 0.0, out.rgb);
    return out;
}

inline ImageTensor load_image(const std::filesystem::path& path) {
    return decode_image(read_file_bytes(path), path.string());
}

/**
 * Resizes (bilinear; skipped when already at input size) and normalizes to
 * a 1 x 3 x H x W float32 blob in channel order RGB.
 */
inline cv::Mat preprocess(const ImageTensor& img, const PreprocSpec& spec) {
    spec.validate();
    cv::Mat rgb = img.rgb;
    if (rgb.rows != spec.input_height || rgb.cols != spec.input_width) {
        cv::resize(img.rgb, rgb, cv::Size(spec.input_width, spec.input_height), 0, 0, cv::INTER_LINEAR);
    }
    const int h = spec.input_height, w = spec.input_width;
    int sizes[4] = {1, 3, h, w};
    cv::Mat blob(4, sizes, CV_32F);
    auto* dst = blob.ptr<float>();
    for (int y = 0; y < h; ++y) {
        const auto* row = rgb.ptr<cv::Vec3f>(y);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                dst[(static_cast<std::size_t>(c) * h + y) * w + x] =
                    static_cast<float>((row[x][c] - spec.mean[c]) / spec.std_dev[c]);
            }
        }
    }
    return blob;
}

/// Activation map of one block, CHW.
struct FeatureMap {
    int block_index = 0;
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> values;
};

/** Per-channel spatial mean, accumulated in double and narrowed to float. */
inline std::vector<float> global_average_pool(const FeatureMap& map) {
    const std::size_t plane = static_cast<std::size_t>(map.height) * map.width;
    if (map.values.size() != plane * map.channels) {
        throw DimensionError("feature map buffer does not match its shape");
    }
    std::vector<float> out(static_cast<std::size_t>(map.channels));
    for (int c = 0; c < map.channels; ++c) {
        const float* p = map.values.data() + c * plane;
        double acc = 0;
        for (std::size_t i = 0; i < plane; ++i) {
            acc += p[i];
        }
        out[c] = static_cast<float>(acc / static_cast<double>(plane));
    }
    return out;
}

/**
 * ONNX ResNet-50 with outputs block1..block5, run through OpenCV's dnn module.
 */
class BlockModel {
public:
    explicit BlockModel(const std::filesystem::path& onnx) {
        if (!std::filesystem::exists(onnx)) {
            throw IoError("model file " + onnx.string() + " does not exist");
        }
        try {
            net_ = cv::dnn::readNetFromONNX(onnx.string());
        } catch (const cv::Exception& e) {
            throw InferenceError("cannot load model " + onnx.string() + ": " + e.what());
        }
        if (net_.empty()) {
            throw InferenceError("model " + onnx.string() + " is empty");
        }
        net_.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
        net_.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
    }

    /** Runs one 1 x 3 x 224 x 224 blob and returns the requested blocks (1-based), shape-checked. */
    std::vector<FeatureMap> extract_blocks(const cv::Mat& blob, const std::vector<int>& blocks) {
        if (blob.dims != 4 || blob.size[0] != 1 || blob.size[1] != 3 || blob.size[2] != 224 || blob.size[3] != 224) {
            throw DimensionError("model input must be 1 x 3 x 224 x 224");
        }
        std::vector<cv::String> names;
        for (int b : blocks) {
            names.emplace_back(block_tap(b).output_name);
        }
        std::vector<cv::Mat> outs;
        try {
            net_.setInput(blob, "input");
            net_.forward(outs, names);
        } catch (const cv::Exception& e) {
            throw InferenceError(std::string("inference failed: ") + e.what());
        }
        if (outs.size() != blocks.size()) {
            throw InferenceError("model returned " + std::to_string(outs.size()) + " outputs, expected " +
                                 std::to_string(blocks.size()));
        }

        std::vector<FeatureMap> maps;
        maps.reserve(blocks.size());
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto& tap = block_tap(blocks[i]);
            const cv::Mat& o = outs[i];
            if (o.dims != 4 || o.size[0] != 1 || o.size[1] != tap.channels || o.size[2] != tap.spatial ||
                o.size[3] != tap.spatial || o.type() != CV_32F) {
                throw InferenceError(std::string("output ") + tap.output_name + " has an unexpected shape");
            }
            FeatureMap m{blocks[i], tap.channels, tap.spatial, tap.spatial, {}};
            const auto* p = o.ptr<float>();
            m.values.assign(p, p + o.total());
            for (float v : m.values) {
                if (!std::isfinite(v)) {
                    throw InferenceError(std::string("output ") + tap.output_name + " has non-finite values");
                }
            }
            maps.push_back(std::move(m));
        }
        return maps;
    }

    std::vector<FeatureMap> extract_blocks(const cv::Mat& blob) { return extract_blocks(blob, {1, 2, 3, 4, 5}); }

private:
    cv::dnn::Net net_;
};

struct SkippedImage {
    std::string image_id;
    std::filesystem::path path;
    std::string reason;
};

struct ExtractionResult {
    /// One matrix per requested block, rows in manifest order.
    std::vector<EmbeddingMatrix> matrices;
    std::vector<SkippedImage> skipped;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/**
 * Pools the requested blocks for every decodable manifest image in a single
 * inference pass per image. Duplicate ids are rejected before any inference;
 * undecodable images are skipped and reported; if none decode, DecodeError.
 */
inline ExtractionResult extract_dataset(BlockModel& model, const std::vector<ManifestRow>& manifest,
                                        const std::vector<int>& blocks, const PreprocSpec& spec,
                                        const ProgressFn& progress = {}) {
    if (manifest.empty()) {
        throw ManifestError("manifest has no images");
    }
    if (blocks.empty()) {
        throw ConfigError("no blocks requested");
    }
    check_unique_ids(manifest);
    spec.validate();

    ExtractionResult out;
    for (int b : blocks) {
        out.matrices.emplace_back(b, static_cast<std::size_t>(block_tap(b).channels));
        out.matrices.back().reserve(manifest.size());
    }
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& row = manifest[i];
        cv::Mat blob;
        try {
            blob = preprocess(load_image(row.path), spec);
        } catch (const DecodeError& e) {
            out.skipped.push_back({row.image_id, row.path, e.what()});
        } catch (const IoError& e) {
            out.skipped.push_back({row.image_id, row.path, e.what()});
        }
        if (!blob.empty()) {
            auto maps = model.extract_blocks(blob, blocks);
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                auto v = global_average_pool(maps[b]);
                out.matrices[b].push_back(row.image_id, row.label, std::span<const float>(v));
            }
        }
        if (progress) {
            progress(i + 1, manifest.size());
        }
    }
    if (out.skipped.size() == manifest.size()) {
        throw DecodeError("none of the " + std::to_string(manifest.size()) + " manifest images could be decoded");
    }
    return out;
}

}  // namespace blockprobe
