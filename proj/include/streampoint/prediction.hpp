#pragma once

#include <vector>

#include "streampoint/geometry.hpp"

namespace streampoint {

// Materialized per-frame network output. Confidences are strictly greater
// than one by construction (1 + exp of the raw head output).
struct PointmapPrediction {
    geo::Pointmap local;   // ref == Local
    geo::Pointmap global;  // ref == Global
    std::vector<float> conf_local;
    std::vector<float> conf_global;
    geo::CameraPose pose;

    void validate() const {
        if (local.ref != geo::PointmapRef::Local || global.ref != geo::PointmapRef::Global)
            throw ContractError("PointmapPrediction: reference tags wrong");
        if (local.count() != global.count() || conf_local.size() != local.count() ||
            conf_global.size() != local.count())
            throw ShapeError("PointmapPrediction: size mismatch");
        for (float c : conf_local)
            if (!(c > 1.f)) throw ContractError("PointmapPrediction: local confidence <= 1");
        for (float c : conf_global)
            if (!(c > 1.f)) throw ContractError("PointmapPrediction: global confidence <= 1");
    }
};

}  // namespace streampoint
