#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cadsketch/sketch.hpp"

namespace cadsketch {

/// JSON Lines, one sketch per line:
/// {"primitives":[{"kind":"line","params":[xs,ys,xe,ye],"construction":false}, ...]}
std::string sketch_to_json_line(const Sketch& sketch);
/// Throws MalformedLine or UnknownKind; line_number is used in messages.
Sketch sketch_from_json_line(const std::string& line, std::size_t line_number = 1);

std::string serialize_dataset(const std::vector<Sketch>& sketches);
std::vector<Sketch> parse_dataset_text(const std::string& text);

void write_dataset(const std::vector<Sketch>& sketches, const std::filesystem::path& path);
std::vector<Sketch> read_dataset(const std::filesystem::path& path);

}  // namespace cadsketch
