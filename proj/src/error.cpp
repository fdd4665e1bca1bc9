/*
 * Copyright 2026 The FedNMF Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fednmf/error.hpp"

namespace fednmf {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kEmptyVocabulary: return "EmptyVocabulary";
    case ErrorCode::kDegenerateSplit: return "DegenerateSplit";
    case ErrorCode::kInvalidConcentration: return "InvalidConcentration";
    case ErrorCode::kTooFewDocuments: return "TooFewDocuments";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kBatchTooSmall: return "BatchTooSmall";
    case ErrorCode::kInvalidBounds: return "InvalidBounds";
    case ErrorCode::kEmptyUpdateSet: return "EmptyUpdateSet";
    case ErrorCode::kDiverged: return "Diverged";
    case ErrorCode::kConfig: return "Config";
    case ErrorCode::kTooFewEmbeddedWords: return "TooFewEmbeddedWords";
    case ErrorCode::kNoScorableTopics: return "NoScorableTopics";
    case ErrorCode::kEmptyTable: return "EmptyTable";
    case ErrorCode::kInconsistentDimension: return "InconsistentDimension";
    case ErrorCode::kSingleClass: return "SingleClass";
  }
  return "Unknown";
}

}  // namespace fednmf
