"""
Report Exporter - self-contained HTML index of visualization outputs

Collects the attention overlays and retrieval grids written by a
visualize run into one HTML file with the images embedded as base64,
so the report can be shared without the run directory.
"""

import base64
import html
from datetime import datetime
from io import BytesIO
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Union

from PIL import Image


def image_to_base64(image_path: Union[str, Path]) -> str:
    """
    Convert an image file to a base64 PNG string for embedding in HTML.

    Args:
        image_path: Path to image file

    Returns:
        str: Base64 encoded PNG, or "" if the file cannot be read
    """
    try:
        with Image.open(image_path) as img:
            buffered = BytesIO()
            img.convert("RGB").save(buffered, format="PNG")
            return base64.b64encode(buffered.getvalue()).decode()
    except Exception as e:
        print(f"[Report] ⚠️ Could not embed {image_path}: {e}")
        return ""


_STYLE = """
        * { margin: 0; padding: 0; box-sizing: border-box; }
        body {
            font-family: 'Segoe UI', Tahoma, Geneva, Verdana, sans-serif;
            background: linear-gradient(135deg, #667eea 0%, #764ba2 100%);
            padding: 20px;
            color: #333;
        }
        .container {
            max-width: 1400px;
            margin: 0 auto;
            background: white;
            border-radius: 12px;
            box-shadow: 0 10px 40px rgba(0,0,0,0.2);
            overflow: hidden;
        }
        header {
            background: linear-gradient(135deg, #667eea 0%, #764ba2 100%);
            color: white;
            padding: 30px;
            text-align: center;
        }
        header h1 { font-size: 32px; margin-bottom: 10px; }
        .metrics {
            display: grid;
            grid-template-columns: repeat(auto-fit, minmax(180px, 1fr));
            gap: 20px;
            padding: 30px;
            background: #f8f9fa;
        }
        .metric-card {
            background: white;
            padding: 20px;
            border-radius: 8px;
            box-shadow: 0 2px 8px rgba(0,0,0,0.1);
            text-align: center;
        }
        .metric-card h3 { font-size: 14px; color: #666; margin-bottom: 10px; text-transform: uppercase; }
        .metric-card .value { font-size: 24px; font-weight: bold; color: #667eea; word-break: break-all; }
        section { padding: 30px; }
        section h2 { font-size: 22px; margin-bottom: 20px; }
        .images {
            display: grid;
            grid-template-columns: repeat(auto-fit, minmax(220px, 1fr));
            gap: 20px;
        }
        .image-box { background: #f8f9fa; padding: 12px; border-radius: 8px; text-align: center; }
        .image-box h3 { margin-bottom: 10px; font-size: 14px; }
        .image-box img { max-width: 100%; height: auto; image-rendering: pixelated; }
        footer { padding: 20px 30px; background: #f8f9fa; text-align: center; color: #666; font-size: 14px; }
"""


def generate_html_report(
    sections: Mapping[str, Sequence[Union[str, Path]]],
    output_path: Union[str, Path],
    title: str = "GraphJigsaw Visualization Report",
    metadata: Optional[Dict[str, object]] = None,
) -> str:
    """
    Write an HTML report with one image grid per section.

    Args:
        sections: Section heading -> image files, rendered in the given order
        output_path: HTML file to write
        title: Page heading
        metadata: Key/value cards shown above the images (checkpoint, images, ...)

    Returns:
        str: Path to the generated HTML file
    """
    output_file = Path(output_path)
    output_file.parent.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")

    parts = [
        "<!DOCTYPE html>",
        '<html lang="en">',
        "<head>",
        '    <meta charset="UTF-8">',
        f"    <title>{html.escape(title)}</title>",
        f"    <style>{_STYLE}    </style>",
        "</head>",
        "<body>",
        '    <div class="container">',
        f"        <header><h1>{html.escape(title)}</h1><p>Generated on {timestamp}</p></header>",
    ]

    if metadata:
        parts.append('        <div class="metrics">')
        for key, value in metadata.items():
            parts.append(
                f'            <div class="metric-card"><h3>{html.escape(str(key))}</h3>'
                f'<div class="value">{html.escape(str(value))}</div></div>'
            )
        parts.append("        </div>")

    for heading, images in sections.items():
        parts.append(f"        <section><h2>{html.escape(heading)}</h2>")
        parts.append('            <div class="images">')
        for image in images:
            b64 = image_to_base64(image)
            if not b64:
                continue
            name = html.escape(Path(image).name)
            parts.append(
                f'                <div class="image-box"><h3>{name}</h3>'
                f'<img src="data:image/png;base64,{b64}" alt="{name}"></div>'
            )
        parts.append("            </div>")
        parts.append("        </section>")

    parts += [
        f"        <footer>{sum(len(v) for v in sections.values())} image(s)</footer>",
        "    </div>",
        "</body>",
        "</html>",
    ]
    output_file.write_text("\n".join(parts) + "\n", encoding="utf-8")
    print(f"[Report] ✅ HTML report written to {output_file}")
    return str(output_file)
