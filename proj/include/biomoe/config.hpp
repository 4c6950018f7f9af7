#pragma once

#include "biomoe/augmentation.hpp"
#include "biomoe/fusion.hpp"
#include "biomoe/model.hpp"
#include "biomoe/representations.hpp"
#include "biomoe/signal.hpp"
#include "biomoe/train.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace biomoe {

struct IoPaths {
    std::string input;
    std::string output;
    std::string weights;
    std::string labels;
    std::string pred_dir;

    friend bool operator==(const IoPaths&, const IoPaths&) = default;
};

/// Everything a run can be configured with. Every section and key is optional; absent ones
/// keep their defaults.
struct RunConfig {
    ModelConfig model;
    std::map<Modality, FilterSpec> filters;  // overrides of default_filter
    std::vector<RepresentationKind> representations;
    std::optional<FusionPlan> fusion;
    StftConfig stft;
    std::optional<double> sample_rate_hz;
    std::uint64_t seed = 0;
    ScheduleConfig schedule;
    AugmentConfig augment;
    LossVariant loss = LossVariant::as_written;
    IoPaths io;

    FilterSpec filter_for(Modality m) const;
};

/// Strict JSON: unknown keys, wrong types and out-of-range values throw UsageError naming the key path.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON with every field written out; parse_run_config reads it back unchanged.
std::string dump_run_config(const RunConfig& cfg);

}  // namespace biomoe
