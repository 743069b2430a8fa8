#pragma once

#include <array>
#include <string_view>

namespace geovec::prompts {

// Template registry keys: one per (task, side) role. The first template
// registered under each key is the fixed inference prompt.
inline constexpr std::string_view kClassificationQuery = "classification/query";
inline constexpr std::string_view kClassificationTarget = "classification/target";
inline constexpr std::string_view kImageToTextQuery = "i2t/query";
inline constexpr std::string_view kTextToImageQuery = "t2i/query";
inline constexpr std::string_view kTextToImageTarget = "t2i/target";
inline constexpr std::string_view kComposedQuery = "rcir/query";
inline constexpr std::string_view kVqaQuery = "vqa/query";
inline constexpr std::string_view kRefExpQuery = "refexp/query";
inline constexpr std::string_view kRefExpTarget = "refexp/target";
inline constexpr std::string_view kRegionCaptionQuery = "regcap/query";
inline constexpr std::string_view kGroundedT2IQuery = "grt2i/query";
inline constexpr std::string_view kGeoT2IQuery = "geot2i/query";
inline constexpr std::string_view kGroundingQuery = "grounding/query";
inline constexpr std::string_view kImageTarget = "image/target";
inline constexpr std::string_view kTextTarget = "text/target";

// Label-prompt prefixes for zero-shot classification; each is followed by
// a space and the class label.
inline constexpr std::array<std::string_view, 20> kEnsemblePrefixes = {
    "satellite imagery of",
    "aerial imagery of",
    "a satellite photo of",
    "an aerial photo of",
    "a satellite view of",
    "an aerial view of",
    "satellite imagery of a",
    "aerial imagery of a",
    "a satellite photo of a",
    "an aerial photo of a",
    "a satellite view of a",
    "an aerial view of a",
    "satellite imagery of the",
    "aerial imagery of the",
    "a satellite photo of the",
    "an aerial photo of the",
    "a satellite view of the",
    "an aerial view of the",
    "a satellite image of",
    "an aerial image of",
};

}  // namespace geovec::prompts
