#pragma once

#include <string>

#include "nn.hpp"
#include "video_model.hpp"

namespace xmbt::io {

void ensure_dir(const std::string& path);
bool exists(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// one binary file per parameter group: <dir>/<group>.params
void save_groups(const std::string& dir, const std::vector<ParamGroup*>& groups);
void load_groups(const std::string& dir, const std::vector<ParamGroup*>& groups);  // strict names/shapes
bool groups_present(const std::string& dir, const std::vector<ParamGroup*>& groups);

// raw float32 array + JSON sidecar declaring shape/dtype/frame_rate
void save_clip(const std::string& base_path, const VideoClip& clip);  // writes base.bin and base.json
VideoClip load_clip(const std::string& base_path);

void save_token_lines(const std::string& path, const std::vector<std::vector<int>>& seqs);

// minimal polyline plot of one or more series into a binary PPM image
void write_series_ppm(const std::string& path, const std::vector<std::vector<double>>& series, int width = 640,
                      int height = 400);

}  // namespace xmbt::io
