#pragma once

#include "biomoe/representations.hpp"
#include "biomoe/signal.hpp"
#include "biomoe/tensor.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace biomoe {

enum class FusionMethod { add, concat };

std::string_view to_string(FusionMethod m) noexcept;
/// "ADD" or "CONCAT", any case.
FusionMethod parse_fusion_method(std::string_view name);

struct FusionInput {
    Modality modality = Modality::other;
    RepresentationKind representation = RepresentationKind::scalogram;

    friend bool operator==(const FusionInput&, const FusionInput&) = default;
};

/// Written as "BVP:scalogram".
std::string to_string(const FusionInput& in);
FusionInput parse_fusion_input(std::string_view tag);

struct FusionPlan {
    std::vector<FusionInput> inputs;
    FusionMethod method = FusionMethod::concat;

    /// At least two inputs, no repeated tag.
    void validate() const;

    friend bool operator==(const FusionPlan&, const FusionPlan&) = default;
};

/// Combines rank-1 embeddings. ADD sums elementwise in double and needs equal widths;
/// CONCAT lays inputs out in the given order.
Tensor fuse(const std::vector<Tensor>& embeddings, FusionMethod method);

/// Width of the fused vector for inputs of the given widths.
std::size_t fused_width(const std::vector<std::size_t>& widths, FusionMethod method);

/// BVP scalogram, EDA scalogram and waveform, Resp scalogram, SpO2 scalogram and waveform, concatenated.
FusionPlan plan_best_multimodal();
/// One scalogram per modality (BVP, EDA, Resp, SpO2), concatenated.
FusionPlan plan_all_scalograms();

}  // namespace biomoe
