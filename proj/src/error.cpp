#include "llmcodec/error.hpp"

namespace llmcodec {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::CorruptHeader: return "CorruptHeader";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvalidBandCount: return "InvalidBandCount";
        case ErrorCode::InvalidStride: return "InvalidStride";
        case ErrorCode::InvalidLength: return "InvalidLength";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::ZeroReference: return "ZeroReference";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::UnknownWord: return "UnknownWord";
        case ErrorCode::EmptyResult: return "EmptyResult";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::ConfigMismatch: return "ConfigMismatch";
        case ErrorCode::DigestMismatch: return "DigestMismatch";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::LayerCountMismatch: return "LayerCountMismatch";
        case ErrorCode::StructureMismatch: return "StructureMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::MissingPart: return "MissingPart";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::EmptyDemonstrations: return "EmptyDemonstrations";
        case ErrorCode::LabelNotInSet: return "LabelNotInSet";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::HttpStatus: return "HttpStatus";
        case ErrorCode::MalformedResponse: return "MalformedResponse";
        case ErrorCode::EmptyCompletion: return "EmptyCompletion";
        case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

}  // namespace llmcodec
