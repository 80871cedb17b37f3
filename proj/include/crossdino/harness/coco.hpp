#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crossdino/error.hpp"

namespace crossdino::harness {

/// One entry of a COCO detection results file; bbox is (x, y, w, h) with a
/// top-left origin.
struct Detection {
    std::int64_t image_id = 0;
    std::int64_t category_id = 0;
    double x = 0, y = 0, w = 0, h = 0;
    double score = 0;

    bool operator==(const Detection&) const = default;
};

/// Parses a COCO results array. Errors name the offending entry index.
inline std::vector<Detection> parse_coco_results(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("results: invalid JSON: ") + e.what());
    }
    if (!doc.is_array()) throw ParseError("results: top level must be an array");

    std::vector<Detection> out;
    out.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& entry = doc[i];
        auto fail = [i](const std::string& msg) { return ParseError("results entry " + std::to_string(i) + ": " + msg); };
        if (!entry.is_object()) throw fail("not an object");
        for (const char* key : {"image_id", "category_id", "bbox", "score"}) {
            if (!entry.contains(key)) throw fail(std::string("missing key '") + key + "'");
        }
        const auto& image_id = entry["image_id"];
        const auto& category_id = entry["category_id"];
        if (!image_id.is_number_integer()) throw fail("image_id must be an integer");
        if (!category_id.is_number_integer()) throw fail("category_id must be an integer");
        const auto& bbox = entry["bbox"];
        if (!bbox.is_array() || bbox.size() != 4) throw fail("bbox must be an array of 4 numbers");
        for (const auto& v : bbox) {
            if (!v.is_number()) throw fail("bbox must be an array of 4 numbers");
        }
        const auto& score = entry["score"];
        if (!score.is_number()) throw fail("score must be a number");

        Detection d;
        d.image_id = image_id.get<std::int64_t>();
        d.category_id = category_id.get<std::int64_t>();
        d.x = bbox[0].get<double>();
        d.y = bbox[1].get<double>();
        d.w = bbox[2].get<double>();
        d.h = bbox[3].get<double>();
        d.score = score.get<double>();
        if (!(d.score >= 0.0 && d.score <= 1.0)) throw fail("score " + std::to_string(d.score) + " outside [0, 1]");
        if (!(d.w >= 0.0 && d.h >= 0.0)) throw fail("bbox width and height must be non-negative");
        out.push_back(d);
    }
    return out;
}

inline std::vector<Detection> ingest_coco_results(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("results: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_coco_results(buf.str());
}

} // namespace crossdino::harness
