#include "unicon/io.hpp"

#include "unicon/error.hpp"
#include "unicon/parallel.hpp"

#include <json.hpp>
#include <openssl/evp.h>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace unicon::io {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << text;
  if (!out) throw RuntimeFailure("write failed: " + path.string());
}

namespace {

std::uint32_t le32(const unsigned char* p) { return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24); }
std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Audio read_wav(const fs::path& path) {
  const std::string data = read_text(path);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw InputError("not a RIFF/WAVE file: " + path.string());
  }
  int channels = 0, rate = 0, bits = 0, format = 0;
  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const std::uint32_t size = le32(p + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > data.size()) throw InputError("truncated WAV chunk in " + path.string());
    if (std::memcmp(p + pos, "fmt ", 4) == 0 && size >= 16) {
      format = le16(p + body);
      channels = le16(p + body + 2);
      rate = static_cast<int>(le32(p + body + 4));
      bits = le16(p + body + 14);
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (format != 1 || bits != 16 || channels < 1) throw InputError("only 16-bit PCM WAV is supported: " + path.string());
      Audio audio;
      audio.sample_rate = rate;
      const std::size_t frames = size / (2u * channels);
      audio.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
          acc += static_cast<std::int16_t>(le16(p + body + 2 * (f * channels + c))) / 32768.0;
        }
        audio.samples[f] = static_cast<float>(acc / channels);
      }
      return audio;
    }
    pos = body + size + (size & 1);
  }
  throw InputError("WAV without data chunk: " + path.string());
}

void write_wav(const fs::path& path, const Audio& audio) {
  std::string s;
  const std::uint32_t bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  s += "RIFF";
  put32(s, 36 + bytes);
  s += "WAVEfmt ";
  put32(s, 16);
  put16(s, 1);
  put16(s, 1);
  put32(s, static_cast<std::uint32_t>(audio.sample_rate));
  put32(s, static_cast<std::uint32_t>(audio.sample_rate * 2));
  put16(s, 2);
  put16(s, 16);
  s += "data";
  put32(s, bytes);
  for (float x : audio.samples) {
    const long v = std::clamp(std::lround(static_cast<double>(x) * 32768.0), -32768L, 32767L);
    put16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  write_text(path, s);
}

Image read_image(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw InputError("cannot read image " + path.string());
  Image img(m.cols, m.rows, 3);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = row[x][2 - c];
    }
  }
  return img;
}

void write_png(const fs::path& path, const Image& image) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  cv::Mat m(image.height, image.width, image.channels == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      if (image.channels == 1) {
        row[x] = image.at(x, y, 0);
      } else {
        for (int c = 0; c < 3; ++c) row[3 * x + 2 - c] = image.at(x, y, c);
      }
    }
  }
  if (!cv::imwrite(path.string(), m)) throw RuntimeFailure("cannot write " + path.string());
}

void save_scene(const ingest::Scene& scene, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["scene_id"] = scene.scene_id;
  meta["fps"] = scene.fps;
  meta["num_frames"] = scene.num_frames;
  meta["frame_width"] = scene.frame_width;
  meta["frame_height"] = scene.frame_height;
  meta["sample_rate"] = scene.audio.sample_rate;
  nlohmann::json entities = nlohmann::json::array();
  std::string labels = "entity_id,frame_index,x1,y1,x2,y2,label_v,label_av\n";
  char buf[160];
  for (const auto& track : scene.tracks) {
    entities.push_back({{"entity_id", track.entity_id}, {"first_frame", track.first_frame}, {"length", track.length()}});
    for (int k = 0; k < track.length(); ++k) {
      const auto& b = track.boxes[static_cast<std::size_t>(k)];
      std::snprintf(buf, sizeof buf, ",%d,%.9g,%.9g,%.9g,%.9g,%d,%d\n", track.first_frame + k, b.x1, b.y1, b.x2, b.y2,
                    track.labels_v[static_cast<std::size_t>(k)], track.labels_av[static_cast<std::size_t>(k)]);
      labels += track.entity_id;
      labels += buf;
      if (static_cast<std::size_t>(k) < track.crops.size() && !track.crops[static_cast<std::size_t>(k)].empty()) {
        write_png(dir / "crops" / track.entity_id / (std::to_string(track.first_frame + k) + ".png"),
                  track.crops[static_cast<std::size_t>(k)]);
      }
    }
  }
  meta["entities"] = entities;
  write_text(dir / "meta.json", meta.dump(2) + "\n");
  write_text(dir / "labels.csv", labels);
  write_wav(dir / "audio.wav", scene.audio);
}

ingest::Scene load_scene(const fs::path& dir, bool with_crops) {
  ingest::Scene scene;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text(dir / "meta.json"));
    scene.scene_id = meta.at("scene_id").get<std::string>();
    scene.fps = meta.at("fps").get<int>();
    scene.num_frames = meta.at("num_frames").get<int>();
    scene.frame_width = meta.value("frame_width", scene.frame_width);
    scene.frame_height = meta.value("frame_height", scene.frame_height);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("bad meta.json in " + dir.string() + ": " + e.what());
  }
  std::map<std::string, std::size_t> index;
  for (const auto& e : meta.at("entities")) {
    ingest::FaceTrack t;
    t.entity_id = e.at("entity_id").get<std::string>();
    t.first_frame = e.at("first_frame").get<int>();
    const int len = e.at("length").get<int>();
    t.boxes.resize(static_cast<std::size_t>(len));
    t.labels_v.resize(static_cast<std::size_t>(len));
    t.labels_av.resize(static_cast<std::size_t>(len));
    index[t.entity_id] = scene.tracks.size();
    scene.tracks.push_back(std::move(t));
  }
  std::istringstream lines(read_text(dir / "labels.csv"));
  std::string line;
  std::getline(lines, line);
  int line_no = 1;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    char entity[256];
    int frame = 0, lv = 0, lav = 0;
    ingest::BoundingBox b;
    std::replace(line.begin(), line.end(), ',', ' ');
    if (std::sscanf(line.c_str(), "%255s %d %lf %lf %lf %lf %d %d", entity, &frame, &b.x1, &b.y1, &b.x2, &b.y2, &lv,
                    &lav) != 8) {
      throw InputError(dir.string() + "/labels.csv line " + std::to_string(line_no) + ": malformed row");
    }
    auto it = index.find(entity);
    if (it == index.end()) throw InputError(dir.string() + "/labels.csv: unknown entity " + entity);
    auto& t = scene.tracks[it->second];
    const int k = frame - t.first_frame;
    if (k < 0 || k >= t.length()) throw InputError(dir.string() + "/labels.csv: frame outside track");
    t.boxes[static_cast<std::size_t>(k)] = b;
    t.labels_v[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(lv != 0);
    t.labels_av[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(lav != 0);
  }
  scene.audio = read_wav(dir / "audio.wav");
  if (with_crops) {
    for (auto& t : scene.tracks) {
      t.crops.reserve(static_cast<std::size_t>(t.length()));
      for (int k = 0; k < t.length(); ++k) {
        t.crops.push_back(read_image(dir / "crops" / t.entity_id / (std::to_string(t.first_frame + k) + ".png")));
      }
    }
  }
  return scene;
}

std::vector<fs::path> list_scene_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw InputError("not a directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "meta.json")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::vector<ingest::Scene> load_dataset(const fs::path& root, int workers, bool with_crops) {
  const auto dirs = list_scene_dirs(root);
  if (dirs.empty()) throw InputError("no scene directories under " + root.string());
  std::vector<ingest::Scene> scenes(dirs.size());
  parallel_for(dirs.size(), workers, [&](std::size_t i) { scenes[i] = load_scene(dirs[i], with_crops); });
  return scenes;
}

namespace {

std::string sha1_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw RuntimeFailure("SHA-1 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

}  // namespace

std::string git_blob_hash(const std::string& content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob += content;
  return sha1_hex(blob);
}

std::string content_hash(const std::vector<fs::path>& paths) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& root : paths) {
    if (fs::is_regular_file(root)) {
      entries.emplace_back(root.filename().string(), git_blob_hash(read_text(root)));
      continue;
    }
    if (!fs::is_directory(root)) throw InputError("cannot hash missing path " + root.string());
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (!e.is_regular_file()) continue;
      entries.emplace_back(fs::relative(e.path(), root).generic_string(), git_blob_hash(read_text(e.path())));
    }
  }
  std::sort(entries.begin(), entries.end());
  std::string listing;
  for (const auto& [name, hash] : entries) listing += hash + " " + name + "\n";
  return sha1_hex(listing);
}

}  // namespace unicon::io
