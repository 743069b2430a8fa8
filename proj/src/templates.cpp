#include "geovec/prompts.hpp"
#include "geovec/tokens.hpp"

namespace geovec {

TemplateRegistry TemplateRegistry::defaults() {
  using namespace prompts;
  TemplateRegistry reg;
  auto add = [&](std::string_view key, std::vector<std::string> list) {
    reg.add(std::string(key), std::move(list));
  };

  add(kClassificationQuery, {
      "Find an image caption describing the given satellite image.",
      "Represent the given image for classification.",
      "Classify the scene shown in this satellite image.",
      "What land-use category does this satellite image belong to?",
      "Find the class label that best describes this aerial scene.",
      "Identify the scene category of the given remote sensing image.",
      "Represent the given satellite image for scene classification.",
      "Find a label describing the given aerial image.",
      "Assign a scene class to this satellite image.",
      "Determine the category of the given overhead image.",
  });
  add(kClassificationTarget, {
      "a satellite image of {text}",
      "satellite imagery of {text}",
      "an aerial photo of {text}",
      "a satellite view of a {text}",
      "an aerial view of the {text}",
      "aerial imagery of a {text}",
      "a satellite photo of the {text}",
      "an aerial image of {text}",
      "a remote sensing image of {text}",
      "an overhead view of a {text}",
  });
  add(kImageToTextQuery, {
      "Find an image caption describing the given satellite image.",
      "Retrieve a caption that describes this satellite image.",
      "Find a text description matching the given aerial image.",
      "Describe the given remote sensing image with a caption.",
      "Find the caption that best matches this overhead image.",
      "Retrieve the description of the given satellite scene.",
      "Find a sentence describing the content of this aerial image.",
      "Match the given satellite image to its caption.",
      "Retrieve text that describes the given image.",
      "Find a caption for the given satellite photo.",
  });
  add(kTextToImageQuery, {
      "Find me a satellite image that matches the given caption:",
      "Retrieve a satellite image depicting",
      "Find an aerial image matching this description:",
      "Retrieve the satellite photo described by:",
      "Find the remote sensing image that shows",
      "Search for a satellite image of the following scene:",
      "Find an overhead image matching the caption:",
      "Retrieve an aerial image that fits the description:",
      "Find a satellite scene described as",
      "Locate the satellite image for this caption:",
  });
  add(kTextToImageTarget, {
      "Find an image caption describing the given satellite image.",
      "Represent the given satellite image.",
      "Represent the given image.",
      "Describe the given aerial image.",
      "Represent the given remote sensing image for retrieval.",
      "Encode this satellite image.",
      "Represent this overhead image.",
      "Represent the given satellite scene.",
      "Summarize the given satellite image.",
      "Represent the content of this aerial image.",
  });
  add(kComposedQuery, {
      "Represent the given satellite image using this caption:",
      "Find the full satellite image containing this region, modified as follows:",
      "Retrieve the complete scene around this region given the change:",
      "Find the satellite image this crop comes from, described as:",
      "Represent the given region together with this modification:",
      "Retrieve the full image extending this region with:",
      "Find the scene that contains this region and matches:",
      "Compose the given region with the text and find the image:",
      "Retrieve a satellite image built from this region and caption:",
      "Find the satellite image implied by this region and description:",
  });
  add(kVqaQuery, {
      "Represent the given image with the following question:",
      "Answer the question about the given satellite image:",
      "Represent this aerial image and question:",
      "Find the answer to the question about this image:",
      "Given the satellite image, answer:",
      "Represent the remote sensing image with the question:",
      "Find the correct answer for this image and question:",
      "Use the satellite image to answer the following:",
      "Represent the image and the following query:",
      "Select the answer to this question about the scene:",
  });
  add(kRefExpQuery, {
      "Select the portion of the satellite image that isolates the object labeled as",
      "Find the region of the image showing",
      "Retrieve the crop of the satellite image containing",
      "Select the part of this aerial image that shows",
      "Find the image region that depicts",
      "Isolate the object in the satellite image described as",
      "Retrieve the region of the scene matching",
      "Crop the satellite image to the object labeled as",
      "Find the portion of the image that contains",
      "Select the region corresponding to",
  });
  add(kRefExpTarget, {
      "Represent the given cropped image of the object.",
      "Represent the given image region.",
      "Represent this crop of a satellite image.",
      "Encode the given cropped region.",
      "Represent the object shown in this crop.",
      "Represent the given region of a satellite scene.",
      "Describe the given cropped aerial image.",
      "Represent this image patch.",
      "Represent the selected region.",
      "Encode the cropped satellite image.",
  });
  add(kRegionCaptionQuery, {
      "Identify the object shown in the image within the region",
      "Describe the object inside the region",
      "What is shown in the satellite image within the box",
      "Find the caption for the object in the region",
      "Identify the content of the image inside",
      "Describe what appears in the marked region",
      "Name the object within the bounding box",
      "Retrieve a caption for the region",
      "Identify the object in the given bounding box",
      "Describe the area of the image inside",
  });
  add(kGroundingQuery, {
      "Identify the object in the given bounding box {bbox}.",
      "Describe the object located at {bbox}.",
      "What object lies inside {bbox}?",
      "Name the object within the region {bbox}.",
      "Identify what appears in the box {bbox}.",
      "Find a caption for the region {bbox}.",
      "Describe the area marked by {bbox}.",
      "Identify the object enclosed by {bbox}.",
      "What is shown within {bbox}?",
      "Describe the content of the region {bbox}.",
  });
  add(kGroundedT2IQuery, {
      "Find me a satellite photo that matches the given spatially anchored caption:",
      "Retrieve the satellite image matching this grounded caption:",
      "Find an aerial image where the described objects appear at the given boxes:",
      "Search for the satellite photo consistent with this caption and boxes:",
      "Find the image matching the caption with region annotations:",
      "Retrieve a satellite scene that fits the box-annotated caption:",
      "Find the aerial photo described by this spatially grounded text:",
      "Locate the satellite image for this caption with boxes:",
      "Find a satellite image whose layout matches:",
      "Retrieve the image consistent with the annotated description:",
  });
  add(kGeoT2IQuery, {
      "Find me a satellite image that matches the given caption at {geo}:",
      "Find a satellite image near {geo} showing",
      "Retrieve the aerial image taken at {geo} depicting",
      "Find the satellite photo located at {geo} that shows",
      "Search near {geo} for a satellite image of",
      "Find an overhead image at {geo} matching:",
      "Retrieve a satellite scene close to {geo} with",
      "Locate the satellite image at {geo} described as",
      "Find the image captured around {geo} showing",
      "Retrieve the satellite image at coordinates {geo}:",
  });
  add(kImageTarget, {
      "Represent the given image.",
      "Represent the given satellite image.",
      "Encode this aerial image.",
      "Represent this remote sensing image.",
      "Represent the given overhead image.",
      "Encode the given satellite scene.",
      "Represent this satellite photo.",
      "Represent the image for retrieval.",
      "Encode the given image.",
      "Represent the content of this satellite image.",
  });
  add(kTextTarget, {"{text}"});
  return reg;
}

}  // namespace geovec
