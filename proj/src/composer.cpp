#include "mms/composer.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mms/smil_syntax.hpp"

namespace mms::composer {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad_manifest(const std::string& what) {
  throw ComposeError(ComposeError::Code::BadManifest, "manifest: " + what);
}

std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_string()) bad_manifest(std::string("'") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ComposeError(ComposeError::Code::MissingFile, "cannot read " + path.string(), path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path resolve(const Manifest& m, const std::string& file) {
  fs::path p(file);
  if (p.is_relative() && !m.base_dir.empty()) p = m.base_dir / p;
  return p.lexically_normal();
}

void check_manifest(const Manifest& m) {
  if (m.from.empty()) bad_manifest("'from' is empty");
  if (m.to.empty()) bad_manifest("'to' is empty");
  if (m.slides.empty()) bad_manifest("no slides");
  for (std::size_t i = 0; i < m.slides.size(); ++i) {
    const auto& s = m.slides[i];
    if (!s.text && !s.image && !s.audio && !s.video) {
      throw ComposeError(ComposeError::Code::EmptySlide, "slide " + std::to_string(i) + " has no media");
    }
    if (s.dur_ms && *s.dur_ms <= 0) bad_manifest("slide " + std::to_string(i) + " has a non-positive duration");
  }
}

// Media of a slide in par order: image, video, text, audio.
struct SlideMedia {
  smil::MediaKind kind;
  const std::string* file;  // null for inline text
};

std::vector<SlideMedia> slide_media(const SlideSpec& s) {
  std::vector<SlideMedia> out;
  if (s.image) out.push_back({smil::MediaKind::Image, &*s.image});
  if (s.video) out.push_back({smil::MediaKind::Video, &*s.video});
  if (s.text) out.push_back({smil::MediaKind::Text, nullptr});
  if (s.audio) out.push_back({smil::MediaKind::Audio, &*s.audio});
  return out;
}

std::string unique_id(const std::string& candidate, std::set<std::string>& taken) {
  if (taken.insert(candidate).second) return candidate;
  const fs::path p(candidate);
  const std::string stem = p.stem().string();
  const std::string ext = p.extension().string();
  for (int n = 2;; ++n) {
    std::string next = stem + "-" + std::to_string(n) + ext;
    if (taken.insert(next).second) return next;
  }
}

// Part ids per slide medium, aligned with slide_media() order.
struct PartPlan {
  std::vector<PartSource> parts;
  std::vector<std::vector<std::string>> ids;
};

PartPlan make_part_plan(const Manifest& m) {
  PartPlan plan;
  std::set<std::string> taken{std::string(kSmilPartId)};
  std::map<fs::path, std::string> by_path;
  for (std::size_t i = 0; i < m.slides.size(); ++i) {
    const auto& slide = m.slides[i];
    auto& ids = plan.ids.emplace_back();
    for (const auto& media : slide_media(slide)) {
      if (!media.file) {
        PartSource src;
        src.content_id = unique_id("slide" + std::to_string(i + 1) + ".txt", taken);
        src.content_type = "text/plain";
        src.inline_text = *slide.text;
        ids.push_back(src.content_id);
        plan.parts.push_back(std::move(src));
        continue;
      }
      const fs::path path = resolve(m, *media.file);
      if (auto it = by_path.find(path); it != by_path.end()) {
        ids.push_back(it->second);
        continue;
      }
      PartSource src;
      src.content_id = unique_id(path.filename().string(), taken);
      src.content_type = content_type_for(path);
      src.file = path;
      by_path.emplace(path, src.content_id);
      ids.push_back(src.content_id);
      plan.parts.push_back(std::move(src));
    }
  }
  return plan;
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Manifest manifest_from_json(std::string_view json_text, fs::path base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    bad_manifest(e.what());
  }
  if (!j.is_object()) bad_manifest("top level must be an object");

  Manifest m;
  m.base_dir = std::move(base_dir);
  m.from = opt_string(j, "from").value_or("");
  m.to = opt_string(j, "to").value_or("");
  m.subject = opt_string(j, "subject");
  if (j.contains("device") && !j.at("device").is_null()) {
    const auto& d = j.at("device");
    try {
      if (d.is_string()) {
        m.device = layout::builtin_profile(d.get<std::string>());
      } else {
        m.device = layout::profile_from_json(d.dump());
      }
    } catch (const std::invalid_argument& e) {
      bad_manifest(e.what());
    }
  }
  if (!j.contains("slides") || !j.at("slides").is_array()) bad_manifest("'slides' must be an array");
  for (const auto& s : j.at("slides")) {
    if (!s.is_object()) bad_manifest("each slide must be an object");
    SlideSpec slide;
    slide.text = opt_string(s, "text");
    slide.image = opt_string(s, "image");
    slide.audio = opt_string(s, "audio");
    slide.video = opt_string(s, "video");
    if (s.contains("dur_ms") && !s.at("dur_ms").is_null()) {
      if (!s.at("dur_ms").is_number_integer()) bad_manifest("'dur_ms' must be an integer");
      slide.dur_ms = s.at("dur_ms").get<std::int64_t>();
    }
    m.slides.push_back(std::move(slide));
  }
  return m;
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ComposeError(ComposeError::Code::MissingFile, "cannot read " + path.string(), path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str(), path.parent_path());
}

std::string content_type_for(const fs::path& file) {
  std::string ext = file.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  static const std::map<std::string, std::string> kTypes = {
      {".jpg", "image/jpeg"},  {".jpeg", "image/jpeg"}, {".gif", "image/gif"},
      {".png", "image/png"},   {".wbmp", "image/vnd.wap.wbmp"}, {".bmp", "image/bmp"},
      {".txt", "text/plain"},  {".amr", "audio/amr"},   {".mp3", "audio/mpeg"},
      {".wav", "audio/wav"},   {".mid", "audio/midi"},  {".midi", "audio/midi"},
      {".3gp", "video/3gpp"},  {".mp4", "video/mp4"},   {".smil", "application/smil"},
  };
  const auto it = kTypes.find(ext);
  return it == kTypes.end() ? "application/octet-stream" : it->second;
}

std::vector<PartSource> plan_parts(const Manifest& manifest) { return make_part_plan(manifest).parts; }

smil::SmilTree compose(const Manifest& manifest) {
  check_manifest(manifest);
  const PartPlan plan = make_part_plan(manifest);
  for (const auto& part : plan.parts) {
    if (part.file && !std::ifstream(*part.file, std::ios::binary)) {
      throw ComposeError(ComposeError::Code::MissingFile, "cannot read " + part.file->string(), part.file->string());
    }
  }

  smil::SmilTree tree = smil::default_tree();
  for (std::size_t i = 0; i < manifest.slides.size(); ++i) {
    const auto& slide = manifest.slides[i];
    smil::Par par;
    par.dur_ms = slide.dur_ms.value_or(playback::kDefaultParDurationMs);
    const auto media = slide_media(slide);
    for (std::size_t k = 0; k < media.size(); ++k) {
      smil::MediaItem item;
      item.kind = media[k].kind;
      item.src = plan.ids[i][k];
      if (item.kind == smil::MediaKind::Image || item.kind == smil::MediaKind::Video) item.region_id = "Image";
      if (item.kind == smil::MediaKind::Text) item.region_id = "Text";
      par.media.push_back(std::move(item));
    }
    tree.pars.push_back(std::move(par));
  }
  return tree;
}

std::string rfc3339_utc(std::int64_t epoch_ms) {
  const std::time_t secs = static_cast<std::time_t>(epoch_ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

mime::MmsEnvelope build_envelope(const Manifest& manifest, const ExportOptions& options) {
  const smil::SmilTree tree = compose(manifest);
  const std::string smil_text = smil::serialize(tree);

  mime::MmsEnvelope env;
  env.start_id = std::string(kSmilPartId);
  env.parts.push_back({std::string(mime::kSmilContentType), env.start_id,
                       mime::choose_transfer_encoding(mime::kSmilContentType, smil_text), smil_text});
  for (const auto& src : plan_parts(manifest)) {
    std::string body = src.file ? read_file(*src.file) : *src.inline_text;
    const auto encoding = mime::choose_transfer_encoding(src.content_type, body);
    env.parts.push_back({src.content_type, src.content_id, encoding, std::move(body)});
  }

  const std::int64_t now_ms = options.date_epoch_ms.value_or(
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
          .count());
  std::string message_id;
  if (options.message_id) {
    message_id = *options.message_id;
  } else {
    std::uint64_t h = fnv1a(smil_text);
    for (const auto& p : env.parts) h = fnv1a(p.body, h);
    h = fnv1a(manifest.from + "\n" + manifest.to + "\n" + std::to_string(now_ms), h);
    char buf[32];
    std::snprintf(buf, sizeof buf, "m-%016llx", static_cast<unsigned long long>(h));
    message_id = buf;
  }

  env.transport_headers.emplace_back("From", manifest.from);
  env.transport_headers.emplace_back("To", manifest.to);
  if (manifest.subject) env.transport_headers.emplace_back("Subject", *manifest.subject);
  env.transport_headers.emplace_back("Date", rfc3339_utc(now_ms));
  env.transport_headers.emplace_back("Message-ID", message_id);
  return env;
}

std::string export_mms(const Manifest& manifest, const ExportOptions& options) {
  mime::EncapsulateOptions enc;
  enc.seed = options.boundary_seed;
  return mime::encapsulate(build_envelope(manifest, options), enc);
}

playback::RenderPlan preview(const Manifest& manifest, std::size_t slide_index) {
  if (slide_index >= manifest.slides.size()) {
    throw std::out_of_range("slide " + std::to_string(slide_index) + " of " + std::to_string(manifest.slides.size()));
  }
  smil::SmilTree tree = compose(manifest);
  smil::Par only = std::move(tree.pars[slide_index]);
  tree.pars.clear();
  tree.pars.push_back(std::move(only));
  const auto device = manifest.device.value_or(layout::default_profile());
  return playback::build_plan(layout::fit(tree, device));
}

}  // namespace mms::composer
