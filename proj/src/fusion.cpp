#include "biomoe/fusion.hpp"

#include "biomoe/error.hpp"

#include <algorithm>
#include <cctype>

namespace biomoe {

std::string_view to_string(FusionMethod m) noexcept
{
    return m == FusionMethod::add ? "ADD" : "CONCAT";
}

FusionMethod parse_fusion_method(std::string_view name)
{
    std::string upper(name);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    if (upper == "ADD")
        return FusionMethod::add;
    if (upper == "CONCAT")
        return FusionMethod::concat;
    throw UsageError("unknown fusion method '" + std::string(name) + "' (expected ADD or CONCAT)");
}

std::string to_string(const FusionInput& in)
{
    return std::string(to_string(in.modality)) + ":" + std::string(to_string(in.representation));
}

FusionInput parse_fusion_input(std::string_view tag)
{
    const auto colon = tag.find(':');
    if (colon == std::string_view::npos)
        throw UsageError("fusion input '" + std::string(tag) + "' must look like MODALITY:representation");
    return {parse_modality(tag.substr(0, colon)), parse_representation(tag.substr(colon + 1))};
}

void FusionPlan::validate() const
{
    if (inputs.size() < 2)
        throw UsageError("a fusion plan needs at least two inputs, got " + std::to_string(inputs.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i)
        for (std::size_t j = i + 1; j < inputs.size(); ++j)
            if (inputs[i] == inputs[j])
                throw UsageError("fusion input " + to_string(inputs[i]) + " is listed twice");
}

std::size_t fused_width(const std::vector<std::size_t>& widths, FusionMethod method)
{
    if (widths.empty())
        throw ShapeError("nothing to fuse");
    if (method == FusionMethod::add) {
        for (std::size_t w : widths)
            if (w != widths.front())
                throw ShapeError("ADD fusion needs equal widths, got " + std::to_string(widths.front()) + " and " +
                                 std::to_string(w));
        return widths.front();
    }
    std::size_t total = 0;
    for (std::size_t w : widths)
        total += w;
    return total;
}

Tensor fuse(const std::vector<Tensor>& embeddings, FusionMethod method)
{
    std::vector<std::size_t> widths;
    for (const auto& e : embeddings) {
        if (e.rank() != 1)
            throw ShapeError("embeddings must be rank 1, got " + shape_to_string(e.dims()));
        widths.push_back(e.size());
    }
    const std::size_t width = fused_width(widths, method);
    Tensor out({width});
    if (method == FusionMethod::add) {
        for (std::size_t i = 0; i < width; ++i) {
            double acc = 0.0;
            for (const auto& e : embeddings)
                acc += e[i];
            out[i] = static_cast<float>(acc);
        }
        return out;
    }
    std::size_t at = 0;
    for (const auto& e : embeddings) {
        std::copy(e.data().begin(), e.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(at));
        at += e.size();
    }
    return out;
}

FusionPlan plan_best_multimodal()
{
    using M = Modality;
    using R = RepresentationKind;
    return {{{M::bvp, R::scalogram},
             {M::eda, R::scalogram},
             {M::eda, R::waveform},
             {M::resp, R::scalogram},
             {M::spo2, R::scalogram},
             {M::spo2, R::waveform}},
            FusionMethod::concat};
}

FusionPlan plan_all_scalograms()
{
    using M = Modality;
    using R = RepresentationKind;
    return {{{M::bvp, R::scalogram}, {M::eda, R::scalogram}, {M::resp, R::scalogram}, {M::spo2, R::scalogram}},
            FusionMethod::concat};
}

}  // namespace biomoe
