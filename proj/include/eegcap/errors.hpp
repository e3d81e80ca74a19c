#pragma once

#include <stdexcept>
#include <string>

namespace eegcap {

enum class ErrorCode {
  ChannelCountMismatch,
  TooShort,
  TooSmall,
  EmptyInput,
  MalformedManifest,
  ChecksumMismatch,
  MissingBlob,
  ShapeMismatch,
  MissingTarget,
  OutOfVocab,
  SpanMismatch,
  WidthMismatch,
  MissingObjectString,
  EmptyCaption,
  DimMismatch,
  MissingCheckpoint,
  MissingEncoderCheckpoint,
  VariantConfigMismatch,
  UnknownLabel,
  EmptyReference,
  BackendUnavailable,
  JudgeUnavailable,
  UnparseableReply,
  BadConfig,
  Internal,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::ChannelCountMismatch: return "ChannelCountMismatch";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::MissingBlob: return "MissingBlob";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingTarget: return "MissingTarget";
    case ErrorCode::OutOfVocab: return "OutOfVocab";
    case ErrorCode::SpanMismatch: return "SpanMismatch";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::MissingObjectString: return "MissingObjectString";
    case ErrorCode::EmptyCaption: return "EmptyCaption";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::MissingEncoderCheckpoint: return "MissingEncoderCheckpoint";
    case ErrorCode::VariantConfigMismatch: return "VariantConfigMismatch";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::JudgeUnavailable: return "JudgeUnavailable";
    case ErrorCode::UnparseableReply: return "UnparseableReply";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

}  // namespace eegcap
