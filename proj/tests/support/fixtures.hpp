#pragma once

#include <string>

#include "embchan/model.hpp"

#ifndef EMBCHAN_MODELS_DIR
#error "EMBCHAN_MODELS_DIR must point at the shipped models"
#endif

inline std::string model_path(const std::string& name) {
  return std::string(EMBCHAN_MODELS_DIR) + "/" + name;
}

inline embchan::ModelConfig shipped_model(const std::string& name) {
  return embchan::load_model(model_path(name));
}
