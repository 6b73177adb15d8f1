#pragma once

#include "shiftmae/phantom.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace shiftmae {

/// One line of `index.jsonl`. Paths are relative to the dataset root.
struct IndexRecord {
    std::string id;
    std::string image_path;
    std::string mask_path;
    Label label = Label::normal;
    Box box;
    std::string split;
};

std::string to_json_line(const IndexRecord& record);
IndexRecord index_record_from_json(const std::string& line);

/// Writes images/<id>.pgm and masks/<id>.pgm under `root` and returns the
/// index record (not appended to the index).
IndexRecord write_sample(const std::filesystem::path& root, const Sample& sample);

/// Writes every sample plus `index.jsonl` (one record per sample, in order).
void write_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples);

std::vector<IndexRecord> read_index(const std::filesystem::path& root);

Sample read_sample(const std::filesystem::path& root, const IndexRecord& record);
/// Looks the id up in the index; MissingRecordError when absent.
Sample read_sample(const std::filesystem::path& root, const std::string& id);

/// All samples of one split (every sample when `split` is empty), in index order.
std::vector<Sample> read_dataset(const std::filesystem::path& root, const std::string& split = {});

}  // namespace shiftmae
