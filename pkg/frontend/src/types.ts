/** Wire types mirroring the service JSON, verbatim. The UI never recomputes
 * attribution numbers; everything displayed comes from these payloads. */

export interface WaterfallContribution {
  name: string;
  value: number | string;
  shap: number;
}

export interface WaterfallData {
  base_value: number;
  contributions: WaterfallContribution[];
  remainder: number;
  final_value: number;
}

export interface ExplanationJson {
  base_value: number;
  shap_values: number[];
  feature_values: (number | string)[];
  prediction: number;
  method: string;
  feature_names: string[];
  n_samples?: number;
}

export interface UploadResult {
  prediction: number;
  explanation: ExplanationJson;
  waterfall: WaterfallData;
}

export interface ChatMessage {
  role: "system" | "user" | "assistant";
  content: string;
}

export type SessionMode = "domain" | "inferential";

export interface SessionInfo {
  session_id: string;
  prompt_version: string;
}

export interface HealthStatus {
  status: string;
  model_loaded: boolean;
  backend_ok: boolean;
}
