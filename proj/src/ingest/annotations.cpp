#include "unicon/error.hpp"
#include "unicon/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

namespace unicon::ingest {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> to_double(std::string_view s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<SpeechLabel> to_label(std::string_view s) {
  if (s == "NOT_SPEAKING") return SpeechLabel::kNotSpeaking;
  if (s == "SPEAKING_AUDIBLE") return SpeechLabel::kSpeakingAudible;
  if (s == "SPEAKING_NOT_AUDIBLE") return SpeechLabel::kSpeakingNotAudible;
  return std::nullopt;
}

}  // namespace

const char* label_name(SpeechLabel label) {
  switch (label) {
    case SpeechLabel::kNotSpeaking:
      return "NOT_SPEAKING";
    case SpeechLabel::kSpeakingAudible:
      return "SPEAKING_AUDIBLE";
    case SpeechLabel::kSpeakingNotAudible:
      return "SPEAKING_NOT_AUDIBLE";
  }
  return "NOT_SPEAKING";
}

ParseResult parse_annotations(std::string_view csv_text) {
  static const char* const kColumns[] = {"video_id", "timestamp", "x1", "y1", "x2", "y2", "label", "entity_id"};
  ParseResult result;
  if (csv_text.substr(0, 3) == "\xEF\xBB\xBF") csv_text.remove_prefix(3);

  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= csv_text.size()) {
    const std::size_t nl = csv_text.find('\n', start);
    lines.push_back(csv_text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  if (lines.empty() || trim(lines[0]).empty()) throw InputError("annotation CSV: missing header row");

  const auto header = split(lines[0]);
  std::map<std::string, std::size_t, std::less<>> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[std::string(header[i])] = i;
  std::size_t idx[8];
  for (int c = 0; c < 8; ++c) {
    auto it = col.find(kColumns[c]);
    if (it == col.end()) throw InputError(std::string("annotation CSV: missing column '") + kColumns[c] + "'");
    idx[c] = it->second;
  }
  const std::size_t needed = *std::max_element(std::begin(idx), std::end(idx)) + 1;

  for (std::size_t li = 1; li < lines.size(); ++li) {
    const int line_no = static_cast<int>(li) + 1;
    if (trim(lines[li]).empty()) continue;
    const auto f = split(lines[li]);
    auto reject = [&](const std::string& msg) { result.rejected.push_back({line_no, msg}); };
    if (f.size() < needed) {
      reject("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
      continue;
    }
    AnnotationRecord rec;
    rec.video_id = std::string(f[idx[0]]);
    rec.entity_id = std::string(f[idx[7]]);
    if (rec.video_id.empty() || rec.entity_id.empty()) {
      reject("empty video_id or entity_id");
      continue;
    }
    const auto ts = to_double(f[idx[1]]);
    if (!ts || *ts < 0) {
      reject("invalid timestamp '" + std::string(f[idx[1]]) + "'");
      continue;
    }
    rec.timestamp = *ts;
    double coords[4];
    bool ok = true;
    for (int c = 0; c < 4; ++c) {
      const auto v = to_double(f[idx[2 + c]]);
      if (!v) {
        reject("invalid coordinate '" + std::string(f[idx[2 + c]]) + "'");
        ok = false;
        break;
      }
      coords[c] = *v;
    }
    if (!ok) continue;
    bool clamped = false;
    for (double& c : coords) {
      const double cl = std::clamp(c, 0.0, 1.0);
      clamped = clamped || cl != c;
      c = cl;
    }
    rec.box = {coords[0], coords[1], coords[2], coords[3]};
    if (!(rec.box.x1 < rec.box.x2) || !(rec.box.y1 < rec.box.y2)) {
      reject("coordinate order violated (need x1 < x2 and y1 < y2)");
      continue;
    }
    const auto label = to_label(f[idx[6]]);
    if (!label) {
      reject("unknown label '" + std::string(f[idx[6]]) + "'");
      continue;
    }
    rec.label = *label;
    if (clamped) result.warnings.push_back({line_no, "coordinate outside [0,1] clamped"});
    result.records.push_back(std::move(rec));
  }
  return result;
}

}  // namespace unicon::ingest
