#include "cadsketch/dataset.hpp"

#include <nlohmann/json.hpp>
#include <sstream>

#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"

namespace cadsketch {

namespace {

using nlohmann::json;

std::string where(std::size_t line_number) { return "line " + std::to_string(line_number); }

PrimitiveKind parse_kind(const std::string& name, std::size_t line_number) {
  for (auto kind : {PrimitiveKind::Arc, PrimitiveKind::Circle, PrimitiveKind::Line, PrimitiveKind::Point}) {
    if (name == to_string(kind)) return kind;
  }
  throw Error(ErrorCode::UnknownKind, where(line_number) + ": unknown primitive kind \"" + name + "\"");
}

}  // namespace

std::string sketch_to_json_line(const Sketch& sketch) {
  json prims = json::array();
  for (const auto& p : sketch.primitives) {
    const auto v = p.values();
    prims.push_back({{"kind", std::string(to_string(p.kind))},
                     {"params", std::vector<double>(v.begin(), v.end())},
                     {"construction", p.construction}});
  }
  return json{{"primitives", std::move(prims)}}.dump();
}

Sketch sketch_from_json_line(const std::string& line, std::size_t line_number) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedLine, where(line_number) + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("primitives") || !doc["primitives"].is_array()) {
    throw Error(ErrorCode::MalformedLine, where(line_number) + ": expected an object with a \"primitives\" array");
  }
  Sketch sketch;
  for (const auto& item : doc["primitives"]) {
    if (!item.is_object() || !item.contains("kind") || !item["kind"].is_string() || !item.contains("params") ||
        !item["params"].is_array()) {
      throw Error(ErrorCode::MalformedLine, where(line_number) + ": primitive needs \"kind\" and \"params\"");
    }
    Primitive p;
    p.kind = parse_kind(item["kind"].get<std::string>(), line_number);
    const auto& params = item["params"];
    if (static_cast<int>(params.size()) != param_count(p.kind)) {
      throw Error(ErrorCode::MalformedLine, where(line_number) + ": " + std::string(to_string(p.kind)) + " expects " +
                                                std::to_string(param_count(p.kind)) + " params");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].is_number()) throw Error(ErrorCode::MalformedLine, where(line_number) + ": non-numeric param");
      p.params[i] = params[i].get<double>();
    }
    if (item.contains("construction")) {
      if (!item["construction"].is_boolean()) {
        throw Error(ErrorCode::MalformedLine, where(line_number) + ": \"construction\" must be boolean");
      }
      p.construction = item["construction"].get<bool>();
    }
    sketch.primitives.push_back(p);
  }
  return sketch;
}

std::string serialize_dataset(const std::vector<Sketch>& sketches) {
  std::string out;
  for (const auto& s : sketches) {
    out += sketch_to_json_line(s);
    out += '\n';
  }
  return out;
}

std::vector<Sketch> parse_dataset_text(const std::string& text) {
  std::vector<Sketch> out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(sketch_from_json_line(line, number));
  }
  return out;
}

void write_dataset(const std::vector<Sketch>& sketches, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_dataset(sketches));
}

std::vector<Sketch> read_dataset(const std::filesystem::path& path) { return parse_dataset_text(read_file(path)); }

}  // namespace cadsketch
