"""Walk through the step language: parsing, rendering, and transcripts."""

from cogdog import parse_result, parse_step, parse_transcript, render_step, render_result

print("== single steps ==")
for line in ["TAKE(<p>hat</p>)", "GO_TO(window)", "SEARCH_VIEW(cold clothing)", "FINISH"]:
    step = parse_step(line)
    print(f"{line!r:38} -> {step.kind.value:14} canonical: {render_step(step)}")

print("\n== results ==")
for line in [
    "RESULT(success)",
    "RESULT(SUCCESS)",
    "RESULT(<p>apple [1]</p> <p>apple [2]</p>)",
    "RESULT(it's cold outside)",
    "RESULT(failure: out of reach)",
]:
    result = parse_result(line)
    print(f"{line!r:46} -> {type(result).__name__:10} canonical: {render_result(result)}")

print("\n== a transcript ==")
transcript = """\
QUESTION_VIEW(is there any window), RESULT(yes)
SEARCH_VIEW(window), RESULT(<p>window</p>)
GO_TO(window), RESULT(success)
FINISH
"""
for entry in parse_transcript(transcript):
    print(f"  {render_step(entry.step):40} result: {entry.result}")
