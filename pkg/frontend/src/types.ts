/** Wire types, mirroring the service's JSON exactly. */

export type FeatureKind = "keyword" | "author";

export interface Feature {
  kind: FeatureKind;
  value: string;
}

export type FilterMode = "include" | "exclude";

export interface FilterPredicate {
  mode: FilterMode;
  feature: Feature;
}

export type SortMode = "interleaved" | "chronological" | "priority";

export interface SortRule {
  feature: Feature;
  weight: number;
}

export interface SortSpec {
  mode: SortMode;
  rules: SortRule[];
}

export interface FeedConfig {
  id: string;
  ownerId: string;
  name: string;
  sources: string[];
  filters: FilterPredicate[];
  sort: SortSpec;
  version: number;
  updatedAt: string;
}

/** Fields a client may change with PUT; identity and version are server-owned. */
export interface FeedPatch {
  name?: string;
  sources?: string[];
  filters?: FilterPredicate[];
  sort?: SortSpec;
}

export interface DraftFeed {
  ownerId: string;
  name: string;
  sources?: string[];
  filters?: FilterPredicate[];
  sort?: SortSpec;
}

export interface MatchedRule {
  feature: Feature;
  weight: number;
  contribution: number;
}

export interface Breakdown {
  agePenalty: number;
  matched: MatchedRule[];
  total: number;
}

export interface Highlight {
  feature: Feature;
  /** [start, end) into the post text; null for features with no span (author). */
  span: [number, number] | null;
}

export interface Post {
  uri: string;
  authorId: string;
  authorHandle: string;
  text: string;
  createdAt: string;
  sourceId: string;
  sourceIndex: number;
  highlights: Highlight[];
  breakdown?: Breakdown;
}

export interface SourceWarning {
  sourceId: string;
  message: string;
}

export interface PostsPage {
  feedId: string;
  configVersion: number;
  posts: Post[];
  warnings: SourceWarning[];
  cursor?: string;
}

export interface SourceHit {
  id: string;
  name: string;
  kind: string;
  postCount?: number;
}

/** A highlighted span the user clicked, plus the post it came from. */
export interface Selection {
  feature: Feature;
  span: [number, number] | null;
  postUri: string;
}
