from .client import HTTPChatClient, StubClient, stub_description
from .core import CompletionCache, CorpusRewrite, RewrittenQuery, rewrite, rewrite_corpus
from .prompt import PromptTemplate, load_template, render_prompt

__all__ = [
    "CompletionCache",
    "CorpusRewrite",
    "HTTPChatClient",
    "PromptTemplate",
    "RewrittenQuery",
    "StubClient",
    "load_template",
    "render_prompt",
    "rewrite",
    "rewrite_corpus",
    "stub_description",
]
